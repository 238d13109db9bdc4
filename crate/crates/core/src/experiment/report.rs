use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::{runs_dir, ABORTED_FILE};
use super::svg::convergence_svg;
use super::ExperimentError;
use crate::codediff::NORMALIZATION_TAG;
use crate::evolution::{incumbent_scores, RatePolicy, RunMeta, RunRecord};
use crate::metrics::{mse, tdw_score, AdherenceSample, AoccBounds, LOG_BASE, ZERO_DIFF_FLOOR};

/// Orders `prompt2` before `prompt10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, sa), (db, sb)) in ca.iter().zip(&cb) {
        let ord = if *da && *db {
            let (ta, tb) = (sa.trim_start_matches('0'), sb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then_with(|| sa.len().cmp(&sb.len()))
        } else {
            sa.cmp(sb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub run_id: String,
    pub meta: RunMeta,
    pub records: Vec<RunRecord>,
}

fn log_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_run(dir: &Path) -> Result<LoadedRun, ExperimentError> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| log_err(&meta_path, e))?;
    let meta: RunMeta = serde_json::from_str(&text).map_err(|e| log_err(&meta_path, e))?;
    let rec_path = dir.join("records.jsonl");
    let text = fs::read_to_string(&rec_path).map_err(|e| log_err(&rec_path, e))?;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| log_err(&rec_path, e)))
        .collect::<Result<Vec<RunRecord>, _>>()?;
    Ok(LoadedRun {
        run_id: meta.run_id.clone(),
        meta,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCell {
    /// `None` when no child delivered a measurable diff.
    pub mse: Option<f64>,
    /// Children with a delivered diff.
    pub samples: usize,
    /// Children without one (generation or extraction failures).
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub prompt: String,
    pub requested_rate: f64,
    pub run_id: String,
    pub gen: usize,
    pub delivered_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub prompt: String,
    pub beta: f64,
    pub gen: usize,
    pub mean: f64,
    /// Population standard deviation across runs.
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeDiffRow {
    pub run_id: String,
    pub prompt: String,
    pub gen: usize,
    pub requested_rate: Option<f64>,
    pub delivered_diff: Option<f64>,
    pub parent_lines: Option<usize>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs_completed: usize,
    pub runs_aborted: usize,
    pub tdw_beta: f64,
    pub mse_log_base: String,
    pub zero_diff_floor: f64,
    pub diff_normalization: String,
    pub aocc_bounds: Vec<AoccBounds>,
    pub samples: usize,
    pub missing_samples: usize,
}

/// Everything the CSV and SVG outputs are made of. Adherence fields stay
/// empty without fixed-rate runs, dynamic fields without dynamic runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub prompts: Vec<String>,
    pub rates: Vec<f64>,
    /// `prompts x rates`.
    pub mse_grid: Vec<Vec<MseCell>>,
    pub tdw: Vec<Option<f64>>,
    pub diff_scatter: Vec<ScatterPoint>,
    pub convergence: Vec<ConvergenceRow>,
    pub codediff_trace: Vec<CodeDiffRow>,
    pub summary: ReportSummary,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn adherence_part(runs: &[&LoadedRun], beta: f64, bundle: &mut ReportBundle) -> Result<(), ExperimentError> {
    let mut prompts: Vec<String> = runs.iter().map(|r| r.meta.prompt_id.clone()).collect();
    prompts.sort_by(|a, b| natural_cmp(a, b));
    prompts.dedup();
    let rates = sorted_unique(
        runs.iter()
            .filter_map(|r| match r.meta.rate_policy {
                RatePolicy::Fixed { rate } => Some(rate),
                _ => None,
            })
            .collect(),
    );
    let mut diffs = vec![vec![Vec::new(); rates.len()]; prompts.len()];
    let mut missing = vec![vec![0usize; rates.len()]; prompts.len()];
    for run in runs {
        let RatePolicy::Fixed { rate } = run.meta.rate_policy else {
            continue;
        };
        let p = prompts.iter().position(|x| *x == run.meta.prompt_id).expect("collected");
        let r = rates.iter().position(|x| *x == rate).expect("collected");
        for rec in run.records.iter().filter(|rec| rec.parent_id.is_some()) {
            match rec.delivered_diff {
                Some(d) => {
                    diffs[p][r].push(d);
                    bundle.diff_scatter.push(ScatterPoint {
                        prompt: run.meta.prompt_id.clone(),
                        requested_rate: rate,
                        run_id: run.run_id.clone(),
                        gen: rec.gen,
                        delivered_diff: d,
                    });
                }
                None => missing[p][r] += 1,
            }
        }
    }
    for (p, row) in diffs.into_iter().enumerate() {
        let mut cells = Vec::with_capacity(rates.len());
        let mut pairs = Vec::new();
        for (r, d) in row.into_iter().enumerate() {
            let samples = d.len();
            let m = if d.is_empty() {
                None
            } else {
                let m = mse(&AdherenceSample::new(rates[r], d))?;
                pairs.push((rates[r], m));
                Some(m)
            };
            bundle.summary.samples += samples;
            bundle.summary.missing_samples += missing[p][r];
            cells.push(MseCell {
                mse: m,
                samples,
                missing: missing[p][r],
            });
        }
        bundle.tdw.push(if pairs.is_empty() { None } else { Some(tdw_score(&pairs, beta)?) });
        bundle.mse_grid.push(cells);
    }
    bundle.prompts = prompts;
    bundle.rates = rates;
    Ok(())
}

fn dynamic_part(runs: &[&LoadedRun], bundle: &mut ReportBundle) {
    let mut groups: Vec<((String, f64), Vec<&LoadedRun>)> = Vec::new();
    for run in runs {
        let RatePolicy::Dynamic { beta } = run.meta.rate_policy else {
            continue;
        };
        let key = (run.meta.prompt_id.clone(), beta);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(run),
            None => groups.push((key, vec![run])),
        }
        for rec in &run.records {
            bundle.codediff_trace.push(CodeDiffRow {
                run_id: run.run_id.clone(),
                prompt: run.meta.prompt_id.clone(),
                gen: rec.gen,
                requested_rate: rec.requested_rate,
                delivered_diff: rec.delivered_diff,
                parent_lines: rec.parent_lines,
                accepted: rec.accepted,
            });
        }
    }
    groups.sort_by(|(a, _), (b, _)| natural_cmp(&a.0, &b.0).then(a.1.total_cmp(&b.1)));
    for ((prompt, beta), members) in groups {
        let curves: Vec<Vec<f64>> = members.iter().map(|r| incumbent_scores(&r.records)).collect();
        let len = curves.iter().map(Vec::len).max().unwrap_or(0);
        for g in 0..len {
            let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(g).copied()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            bundle.convergence.push(ConvergenceRow {
                prompt: prompt.clone(),
                beta,
                gen: g + 1,
                mean,
                std: var.sqrt(),
                runs: vals.len(),
            });
        }
    }
}

/// Assembles a report from `<dir>/runs/*` alone.
pub fn build_report(dir: &Path, tdw_beta: f64) -> Result<ReportBundle, ExperimentError> {
    let root = runs_dir(dir);
    let entries = fs::read_dir(&root).map_err(|e| log_err(&root, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| log_err(&root, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort_by(|a, b| natural_cmp(a, b));
    let mut runs = Vec::new();
    let mut aborted = 0;
    for name in names {
        let path = root.join(&name);
        if path.join(ABORTED_FILE).exists() {
            aborted += 1;
            continue;
        }
        runs.push(read_run(&path)?);
    }
    let mut bounds: Vec<AoccBounds> = Vec::new();
    for r in &runs {
        if !bounds.contains(&r.meta.aocc_bounds) {
            bounds.push(r.meta.aocc_bounds);
        }
    }
    let mut bundle = ReportBundle {
        prompts: Vec::new(),
        rates: Vec::new(),
        mse_grid: Vec::new(),
        tdw: Vec::new(),
        diff_scatter: Vec::new(),
        convergence: Vec::new(),
        codediff_trace: Vec::new(),
        summary: ReportSummary {
            runs_completed: runs.len(),
            runs_aborted: aborted,
            tdw_beta,
            mse_log_base: LOG_BASE.to_owned(),
            zero_diff_floor: ZERO_DIFF_FLOOR,
            diff_normalization: NORMALIZATION_TAG.to_owned(),
            aocc_bounds: bounds,
            samples: 0,
            missing_samples: 0,
        },
    };
    let (fixed, dynamic): (Vec<&LoadedRun>, Vec<&LoadedRun>) = runs
        .iter()
        .partition(|r| matches!(r.meta.rate_policy, RatePolicy::Fixed { .. }));
    adherence_part(&fixed, tdw_beta, &mut bundle)?;
    dynamic_part(&dynamic, &mut bundle);
    Ok(bundle)
}

/// Shortest round-trip form; exponent notation for extreme magnitudes.
fn num(v: f64) -> String {
    if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Renders a header and rows through the csv writer.
fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl ReportBundle {
    pub fn mse_grid_csv(&self) -> String {
        let rates: Vec<String> = self.rates.iter().map(|r| num(*r)).collect();
        let mut header = vec!["prompt"];
        header.extend(rates.iter().map(String::as_str));
        header.push("tdw");
        let rows = self.prompts.iter().zip(&self.mse_grid).zip(&self.tdw).map(|((p, row), tdw)| {
            let mut out = vec![p.clone()];
            out.extend(row.iter().map(|c| opt(c.mse)));
            out.push(opt(*tdw));
            out
        });
        table(&header, rows)
    }

    pub fn tdw_csv(&self) -> String {
        let rows = self.prompts.iter().zip(&self.mse_grid).zip(&self.tdw).map(|((p, row), tdw)| {
            let used = row.iter().filter(|c| c.mse.is_some()).count();
            let samples: usize = row.iter().map(|c| c.samples).sum();
            let missing: usize = row.iter().map(|c| c.missing).sum();
            vec![p.clone(), opt(*tdw), used.to_string(), samples.to_string(), missing.to_string()]
        });
        table(&["prompt", "tdw", "rates_used", "samples", "missing"], rows)
    }

    pub fn mse_counts_csv(&self) -> String {
        let mut rows = Vec::new();
        for (p, row) in self.prompts.iter().zip(&self.mse_grid) {
            for (r, cell) in self.rates.iter().zip(row) {
                rows.push(vec![
                    p.clone(),
                    num(*r),
                    opt(cell.mse),
                    cell.samples.to_string(),
                    cell.missing.to_string(),
                ]);
            }
        }
        table(&["prompt", "rate", "mse", "samples", "missing"], rows)
    }

    pub fn diff_scatter_csv(&self) -> String {
        let rows = self.diff_scatter.iter().map(|s| {
            vec![
                s.prompt.clone(),
                num(s.requested_rate),
                s.run_id.clone(),
                s.gen.to_string(),
                num(s.delivered_diff),
            ]
        });
        table(&["prompt", "requested_rate", "run_id", "gen", "delivered_diff"], rows)
    }

    pub fn convergence_csv(&self) -> String {
        let rows = self.convergence.iter().map(|c| {
            vec![
                c.prompt.clone(),
                num(c.beta),
                c.gen.to_string(),
                num(c.mean),
                num(c.std),
                c.runs.to_string(),
            ]
        });
        table(&["prompt", "beta", "gen", "mean", "std", "runs"], rows)
    }

    pub fn codediff_trace_csv(&self) -> String {
        let rows = self.codediff_trace.iter().map(|c| {
            vec![
                c.run_id.clone(),
                c.prompt.clone(),
                c.gen.to_string(),
                opt(c.requested_rate),
                opt(c.delivered_diff),
                c.parent_lines.map(|n| n.to_string()).unwrap_or_default(),
                c.accepted.to_string(),
            ]
        });
        table(
            &["run_id", "prompt", "gen", "requested_rate", "delivered_diff", "parent_lines", "accepted"],
            rows,
        )
    }
}

/// Writes every report file into `out` and returns their paths.
pub fn emit_reports(bundle: &ReportBundle, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |e: std::io::Error| ExperimentError::Io(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let summary = serde_json::to_string_pretty(&bundle.summary).map_err(|e| ExperimentError::Io(e.to_string()))? + "\n";
    let files: BTreeMap<&str, String> = [
        ("mse_grid.csv", bundle.mse_grid_csv()),
        ("tdw.csv", bundle.tdw_csv()),
        ("mse_counts.csv", bundle.mse_counts_csv()),
        ("diff_scatter.csv", bundle.diff_scatter_csv()),
        ("convergence.csv", bundle.convergence_csv()),
        ("codediff_trace.csv", bundle.codediff_trace_csv()),
        ("convergence.svg", convergence_svg(&bundle.convergence)),
        ("summary.json", summary),
    ]
    .into_iter()
    .collect();
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out.join(name);
        fs::write(&path, body).map_err(io)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut v = vec!["prompt10", "prompt2", "baseline", "prompt1", "prompt02"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["baseline", "prompt1", "prompt2", "prompt02", "prompt10"]);
        assert_eq!(natural_cmp("", "a"), Ordering::Less);
    }

    #[test]
    fn csv_fields() {
        assert_eq!(table(&["a"], [vec!["x,y".to_string()]]), "a\n\"x,y\"\n");
        assert_eq!(num(0.1), "0.1");
        assert_eq!(opt(None), "");
        assert_eq!(num(4.930380657631325e-32), "4.930380657631325e-32");
        assert_eq!(num(4.930380657631325e-32).parse::<f64>().unwrap(), 4.930380657631325e-32);
        assert_eq!(num(40.0), "40");
    }
}
