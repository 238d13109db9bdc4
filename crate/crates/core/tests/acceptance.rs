//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Tolerances and time limits are pinned below.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mutctl::bench::{
    run_candidate, BudgetedRun, CandidateCommand, EvalSettings, FunctionId, Problem, ReferenceEvaluator, LOWER, UPPER,
};
use mutctl::codediff::{diff_percent, diff_percent_seq, SourceText};
use mutctl::evolution::{evolve, incumbent_scores, EvolutionConfig, RatePolicy};
use mutctl::experiment::{build_report, emit_reports, run_adherence, run_dynamic, BackendChoice, ExperimentConfig, PlanKind};
use mutctl::llm::{MockBackend, MockStyle};
use mutctl::metrics::{aocc, mse, tdw_score, tdw_weights, AdherenceSample, AoccBounds, EvalTrace};
use mutctl::powerlaw::PowerLawConfig;
use mutctl::promptbank::{builtin_bank, builtin_task_prompt};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, format!("{what}: got {got:e}, want {want:e} (tol {tol:e})"))
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))
}

/// `sum_{i=1}^{floor(n/2)} i^-beta` added up in the obvious order.
fn direct_norm(beta: f64, n: usize) -> f64 {
    (1..=n / 2).map(|i| (i as f64).powf(-beta)).sum()
}

fn pmf_suite() -> Outcome {
    let start = Instant::now();
    for beta in [1.5, 2.0, 3.0] {
        for n in [4, 10, 100, 1001] {
            let cfg = PowerLawConfig::new(beta, n).map_err(|e| e.to_string())?;
            let total: f64 = cfg.pmf_table().iter().sum();
            close(total, 1.0, 1e-12, &format!("sum beta={beta} n={n}"))?;
            let ratio = cfg.pmf(1).unwrap() / cfg.pmf(2).unwrap();
            close(ratio, 2f64.powf(beta), 1e-12, &format!("p1/p2 beta={beta} n={n}"))?;
        }
    }
    let p1 = PowerLawConfig::new(1.5, 4).unwrap().pmf(1).unwrap();
    close(p1, 1.0 / direct_norm(1.5, 4), 1e-12, "p1 vs direct sum")?;
    close(p1, 0.738796, 1e-6, "p1 beta=1.5 n=4")?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("p(1; 1.5, 4) = {p1:.9}"))
}

fn pmf_shape() -> Outcome {
    let start = Instant::now();
    let light = PowerLawConfig::new(3.0, 100).unwrap().pmf_table();
    let heavy = PowerLawConfig::new(1.5, 100).unwrap().pmf_table();
    let tail = |t: &[f64]| t[9..].iter().sum::<f64>();
    ensure(light[0] > heavy[0], "p(1) should be larger for beta = 3")?;
    ensure(tail(&heavy) > tail(&light), "tail mass should be larger for beta = 1.5")?;
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "p(1): {:.4} (1.5) < {:.4} (3); tail>=10: {:.5} (1.5) > {:.5} (3)",
        heavy[0],
        light[0],
        tail(&heavy),
        tail(&light)
    ))
}

fn sampler() -> Outcome {
    let start = Instant::now();
    let cfg = PowerLawConfig::new(1.5, 100).unwrap();
    let s = cfg.sampler();
    let draws = 1_000_000;
    let mut counts = vec![0usize; 50];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..draws {
        counts[s.sample_alpha(&mut rng) - 1] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(cfg.pmf_table())
        .map(|(&c, p)| (c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    ensure(tv < 0.01, format!("total variation {tv}"))?;
    let seq = |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..1000).map(|_| s.sample_alpha(&mut r)).collect::<Vec<_>>()
    };
    ensure(seq(7) == seq(7), "same seed gave different draws")?;
    ensure(seq(7) != seq(8), "different seeds gave identical draws")?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("TV = {tv:.5} over 1e6 draws"))
}

fn mse_suite() -> Outcome {
    let m = |x: f64, d: &[f64]| mse(&AdherenceSample::new(x, d.to_vec())).map_err(|e| e.to_string());
    close(m(10.0, &[10.0, 10.0, 10.0])?, 0.0, 0.0, "exact delivery")?;
    let two = m(10.0, &[20.0, 5.0])?;
    close(two, 2f64.ln().powi(2), 1e-12, "ln(2)^2")?;
    close(two, 0.480453, 1e-6, "mse(10, [20, 5])")?;
    for c in [0.5, 3.0] {
        let d = [20.0, 5.0, 7.5, 13.0];
        let base = m(10.0, &d)?;
        let scaled = m(10.0 * c, &d.map(|v| v * c))?;
        close(scaled, base, 1e-12, &format!("scale c={c}"))?;
    }
    Ok(format!("mse(10, [20, 5]) = {two:.9}"))
}

fn tdw_suite() -> Outcome {
    let rates = [2.0, 5.0, 10.0, 20.0, 40.0];
    let w = tdw_weights(&rates, 1.5).map_err(|e| e.to_string())?;
    close(w.iter().sum(), 1.0, 1e-12, "weight sum")?;
    let m = 0.37;
    let pairs: Vec<(f64, f64)> = rates.iter().map(|&r| (r, m)).collect();
    close(tdw_score(&pairs, 1.5).unwrap(), m / 5.0, 1e-12, "equal-mse score")?;
    // oracle: normalized power-law probabilities of alpha = x n / 100 at n = 100
    let n = 100;
    let norm = direct_norm(1.5, n);
    let p: Vec<f64> = rates.iter().map(|x| (x * n as f64 / 100.0).powf(-1.5) / norm).collect();
    let total: f64 = p.iter().sum();
    for (wi, pi) in w.iter().zip(&p) {
        close(*wi, pi / total, 1e-9, "weight vs oracle")?;
    }
    close(w[0], 0.7219, 5e-5, "w(2%)")?;
    Ok(format!("w(2%) = {:.6}", w[0]))
}

/// Maps every sequence of length <= 8 over {0,1,2} to a dense index.
struct SeqSpace {
    seqs: Vec<Vec<u8>>,
    offset: [usize; 10],
}

impl SeqSpace {
    fn new(max_len: usize) -> Self {
        let mut seqs = Vec::new();
        let mut offset = [0usize; 10];
        for (len, off) in offset.iter_mut().enumerate().take(max_len + 1) {
            *off = seqs.len();
            for v in 0..3usize.pow(len as u32) {
                let mut s = vec![0u8; len];
                let mut x = v;
                for slot in s.iter_mut().rev() {
                    *slot = (x % 3) as u8;
                    x /= 3;
                }
                seqs.push(s);
            }
        }
        offset[max_len + 1] = seqs.len();
        Self { seqs, offset }
    }

    fn index(&self, s: &[u8]) -> usize {
        self.offset[s.len()] + s.iter().fold(0usize, |acc, &c| acc * 3 + c as usize)
    }
}

/// Compares the diff against the set-theoretic LCS: the longest sequence
/// that is a subsequence of both. `sup[t]` is the bitset of all sequences
/// containing `t`; OR-ing `sup` over the length-L subsequences of `a`
/// gives every `b` sharing a common subsequence of length L with `a`.
fn diff_exhaustive() -> Outcome {
    let start = Instant::now();
    let space = SeqSpace::new(8);
    let count = space.seqs.len();
    let words = count.div_ceil(64);
    let subs: Vec<Vec<usize>> = space
        .seqs
        .iter()
        .map(|s| {
            let mut out: Vec<usize> = (0u32..1 << s.len())
                .map(|mask| {
                    let t: Vec<u8> = s.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &c)| c).collect();
                    space.index(&t)
                })
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let mut sup = vec![0u64; count * words];
    for (s, list) in subs.iter().enumerate() {
        for &t in list {
            sup[t * words + s / 64] |= 1 << (s % 64);
        }
    }
    let mut checked = 0u64;
    let mut masks = vec![0u64; 9 * words];
    for (ai, a) in space.seqs.iter().enumerate() {
        masks.iter_mut().for_each(|m| *m = 0);
        for &t in &subs[ai] {
            let len = space.seqs[t].len();
            let (dst, src) = (&mut masks[len * words..(len + 1) * words], &sup[t * words..(t + 1) * words]);
            for (d, s) in dst.iter_mut().zip(src) {
                *d |= s;
            }
        }
        for (bi, b) in space.seqs.iter().enumerate() {
            let longest = a.len().max(b.len());
            let got = diff_percent_seq(a, b);
            if longest == 0 {
                ensure(got.is_err(), "two empty sequences must be rejected")?;
                continue;
            }
            let lcs = (0..=a.len().min(b.len()))
                .rev()
                .find(|&l| masks[l * words + bi / 64] >> (bi % 64) & 1 == 1)
                .expect("the empty sequence is always common");
            let want = 100.0 * (longest - lcs) as f64 / longest as f64;
            if got != Ok(want) {
                return Err(format!("{a:?} vs {b:?}: got {got:?}, want {want}"));
            }
            checked += 1;
        }
    }
    let ten: String = (0..10).map(|i| format!("x{i} = {i}\n")).collect();
    let one_changed = ten.replace("x3 = 3", "x3 = 33");
    let d = diff_percent(&SourceText::normalize(&ten), &SourceText::normalize(&one_changed)).unwrap();
    ensure(d == 10.0, format!("one line of ten gave {d}"))?;
    Ok(format!("{checked} pairs agree; 1-of-10 = {d:?}; {:.1?}", start.elapsed()))
}

fn aocc_suite() -> Outcome {
    let b = AoccBounds::default();
    let constant = |v: f64, len: usize, budget: usize| EvalTrace::new(vec![v; len], budget, b).unwrap();
    let a = |t: &EvalTrace| aocc(t).map_err(|e| e.to_string());
    close(a(&constant(1e2, 50, 50))?, 0.0, 0.0, "constant at upper")?;
    close(a(&constant(1e-8, 50, 50))?, 1.0, 0.0, "constant at lower")?;
    close(a(&constant(1e-3, 50, 50))?, 0.5, 1e-12, "constant 1e-3")?;
    let mut t = EvalTrace::empty(120, b);
    for v in [50.0, 3.0, 3.0, 0.2, 1e-4, 1e-6] {
        t.record(v);
    }
    close(a(&t.padded())?, a(&t)?, 1e-12, "padding")?;
    Ok("bounds (1e-8, 1e2), log10 scale".into())
}

fn bench_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_opt = 0.0f64;
    let mut min_prec = f64::INFINITY;
    for f in FunctionId::ALL {
        for seed in [1, 2, 3] {
            let p = Problem::new(f, 5, seed).unwrap();
            let at_opt = p.precision(p.x_opt());
            ensure(at_opt <= 1e-12, format!("{f} seed {seed}: precision at optimum {at_opt:e}"))?;
            worst_opt = worst_opt.max(at_opt);
            for _ in 0..100_000 {
                let x: Vec<f64> = (0..5).map(|_| rng.gen_range(LOWER..=UPPER)).collect();
                let v = p.precision(&x);
                ensure(v >= 0.0 && v.is_finite(), format!("{f} seed {seed}: precision {v} at {x:?}"))?;
                min_prec = min_prec.min(v);
            }
        }
    }
    Ok(format!(
        "6 functions x 3 seeds; max at optimum {worst_opt:e}; min random {min_prec:e}; {:.1?}",
        start.elapsed()
    ))
}

fn protocol_round_trip() -> Outcome {
    let cmd = CandidateCommand::new(env!("CARGO_BIN_EXE_mutctl"), ["candidate-echo"]);
    let p = Problem::new(FunctionId::Sphere, 5, 1).unwrap();
    let start = Instant::now();
    let a = run_candidate(&cmd, &p, 200, 17, AoccBounds::default(), Duration::from_secs(30));
    let elapsed = start.elapsed();
    ensure(a.outcome.is_completed(), format!("{:?}: {}", a.outcome, a.stderr_tail))?;
    ensure(a.run.trace().len() == 200, format!("trace length {}", a.run.trace().len()))?;
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    let b = run_candidate(&cmd, &p, 200, 17, AoccBounds::default(), Duration::from_secs(30));
    ensure(a.run.trace() == b.run.trace(), "traces differ under a fixed seed")?;
    let mut local = BudgetedRun::new(p, 200, AoccBounds::default());
    mutctl::bench::reference::run_in_process(&mut local, 17).unwrap();
    ensure(local.trace() == a.run.trace(), "subprocess and in-process traces differ")?;
    Ok(format!("200 evaluations in {elapsed:.2?}"))
}

fn offline_evolution() -> Outcome {
    let start = Instant::now();
    let bank = builtin_bank();
    let settings = EvalSettings {
        budget: 200,
        ..EvalSettings::default()
    };
    let evaluator = ReferenceEvaluator::new(settings);
    let cfg = EvolutionConfig {
        run_id: "e2e".into(),
        prompt_id: "prompt1".into(),
        rate_policy: RatePolicy::Fixed { rate: 10.0 },
        generation_budget: 100,
        seed: 1,
        model_name: "mock".into(),
    };
    let mut backend = MockBackend::new(MockStyle::Exact, 1);
    let result = evolve(&cfg, &builtin_task_prompt(), bank.get("prompt1").unwrap(), &mut backend, &evaluator, None)
        .map_err(|e| e.to_string())?;
    ensure(result.records.len() == 100, "expected 100 generations")?;
    let curve = incumbent_scores(&result.records);
    ensure(curve.windows(2).all(|w| w[1] >= w[0]), "incumbent score decreased")?;
    for r in &result.records[1..] {
        let n = r.parent_lines.ok_or("missing parent length")?;
        let k = ((n as f64 / 10.0).round() as usize).max(1);
        let want = 100.0 * k as f64 / n as f64;
        ensure(r.delivered_diff == Some(want), format!("gen {}: {:?} != {want}", r.gen, r.delivered_diff))?;
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "score {:.6} -> {:.6}; {:.1?}",
        curve[0],
        curve[curve.len() - 1],
        start.elapsed()
    ))
}

fn desk_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 2025,
        output_dir: out.to_owned(),
        ..ExperimentConfig::default()
    };
    cfg.plan.prompts = ["prompt1", "prompt3", "prompt5", "prompt8", "prompt11"].map(String::from).to_vec();
    cfg.plan.generation_budget = 20;
    cfg.plan.adherence_repeats = 3;
    cfg.eval.settings.budget = 200;
    cfg
}

fn adherence_discrimination() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |style: BackendChoice, name: &str| {
        let mut cfg = desk_config(&dir.path().join(name));
        cfg.backend.kind = style;
        run_adherence(&cfg.plan(PlanKind::Adherence)).map_err(|e| e.to_string())
    };
    let exact = run(BackendChoice::Mock, "exact")?;
    let sloppy = run(BackendChoice::Sloppy, "sloppy")?;
    ensure(exact.prompts == sloppy.prompts && exact.prompts.len() == 5, "prompt sets differ")?;
    ensure(exact.rates.len() == 5, "expected five rates")?;
    for (i, p) in exact.prompts.iter().enumerate() {
        let (a, b) = (exact.tdw[i].ok_or("no tdw")?, sloppy.tdw[i].ok_or("no tdw")?);
        ensure(a < b, format!("{p}: TDW exact {a} >= sloppy {b}"))?;
    }
    let mut better = 0;
    for (re, rs) in exact.mse_grid.iter().zip(&sloppy.mse_grid) {
        for (ce, cs) in re.iter().zip(rs) {
            if let (Some(e), Some(s)) = (ce.mse, cs.mse) {
                if e < s {
                    better += 1;
                }
            }
        }
    }
    ensure(better >= 24, format!("exact MSE better in only {better}/25 cells"))?;
    Ok(format!("TDW exact < sloppy for 5/5 prompts; MSE better in {better}/25 cells; {:.1?}", start.elapsed()))
}

fn report_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let bundle = build_report(dir, 1.5).map_err(|e| e.to_string())?;
    let out = dir.join("report");
    emit_reports(&bundle, &out).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for name in ["mse_grid.csv", "tdw.csv", "mse_counts.csv", "diff_scatter.csv", "convergence.csv", "codediff_trace.csv"] {
        files.push((name.to_string(), fs::read(out.join(name)).map_err(|e| e.to_string())?));
    }
    let mut runs: Vec<_> = fs::read_dir(dir.join("runs"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    runs.sort();
    for r in runs {
        let path = dir.join("runs").join(&r).join("records.jsonl");
        files.push((format!("{r}/records.jsonl"), fs::read(path).map_err(|e| e.to_string())?));
    }
    Ok(files)
}

fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (recorded, replayed) = (dir.path().join("recorded"), dir.path().join("replayed"));
    let configure = |out: &Path, backend: BackendChoice| {
        let mut cfg = desk_config(out);
        cfg.plan.prompts = vec!["prompt2".into(), "prompt7".into()];
        cfg.plan.adherence_rates = vec![5.0, 20.0];
        cfg.plan.adherence_repeats = 2;
        cfg.plan.dynamic_repeats = 2;
        cfg.plan.generation_budget = 12;
        cfg.backend.kind = backend;
        cfg.backend.replay_dir = Some(recorded.clone());
        cfg
    };
    for (out, backend) in [(&recorded, BackendChoice::Mock), (&replayed, BackendChoice::Replay)] {
        let cfg = configure(out, backend);
        let a = run_adherence(&cfg.plan(PlanKind::Adherence)).map_err(|e| e.to_string())?;
        let d = run_dynamic(&cfg.plan(PlanKind::Dynamic)).map_err(|e| e.to_string())?;
        ensure(a.summary.runs_aborted + d.summary.runs_aborted == 0, "a run aborted")?;
    }
    let (a, b) = (report_files(&recorded)?, report_files(&replayed)?);
    ensure(a.len() == b.len(), "different file sets")?;
    for ((na, fa), (nb, fb)) in a.iter().zip(&b) {
        ensure(na == nb, format!("{na} vs {nb}"))?;
        ensure(fa == fb, format!("{na} differs after replay"))?;
    }
    Ok(format!("{} files byte-identical", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("powerlaw-pmf", pmf_suite),
        ("powerlaw-shape", pmf_shape),
        ("powerlaw-sampler", sampler),
        ("mse", mse_suite),
        ("tdw", tdw_suite),
        ("diff-exhaustive-lcs", diff_exhaustive),
        ("aocc", aocc_suite),
        ("bench-functions", bench_suite),
        ("protocol-round-trip", protocol_round_trip),
        ("offline-evolution", offline_evolution),
        ("adherence-discrimination", adherence_discrimination),
        ("replay-determinism", replay_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name:<26} {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<26} {detail} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
