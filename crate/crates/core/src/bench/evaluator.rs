//! Scoring a candidate program by mean AOCC over
//! (function x instance x repeat) runs.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::protocol::{run_candidate, CandidateCommand, FailureKind, RunOutcome};
use super::{reference, BudgetedRun, FunctionId, Problem};
use crate::codediff::SourceText;
use crate::metrics::{aocc, AoccBounds};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub functions: Vec<FunctionId>,
    pub dim: usize,
    pub instances: Vec<u64>,
    pub repeats: usize,
    pub budget: usize,
    pub aocc_lower: f64,
    pub aocc_upper: f64,
    pub timeout_s: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            functions: FunctionId::ALL.to_vec(),
            dim: 5,
            instances: vec![1, 2, 3],
            repeats: 3,
            budget: 1000,
            aocc_lower: 1e-8,
            aocc_upper: 1e2,
            timeout_s: 60.0,
        }
    }
}

impl EvalSettings {
    pub fn bounds(&self) -> AoccBounds {
        AoccBounds {
            lower: self.aocc_lower,
            upper: self.aocc_upper,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    pub fn jobs(&self) -> Vec<RunJob> {
        let mut out = Vec::new();
        for &function in &self.functions {
            for &instance in &self.instances {
                for repeat in 0..self.repeats {
                    out.push(RunJob {
                        function,
                        instance,
                        repeat,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunJob {
    pub function: FunctionId,
    pub instance: u64,
    pub repeat: usize,
}

/// Seed handed to the candidate for one job; identical for parent and child.
pub fn candidate_seed(job: &RunJob) -> u64 {
    derive_seed(&[
        "candidate".to_string(),
        job.function.to_string(),
        job.instance.to_string(),
        job.repeat.to_string(),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    RunFailed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean AOCC, or 0 when any run failed.
    pub score: f64,
    pub status: EvalStatus,
    pub error_text: Option<String>,
    pub runs: usize,
    pub out_of_bounds: usize,
}

impl Evaluation {
    fn from_runs(results: Vec<JobResult>) -> Self {
        let runs = results.len();
        let out_of_bounds = results.iter().map(|r| r.out_of_bounds).sum();
        if let Some(failed) = results.iter().find(|r| r.failure.is_some()) {
            let (kind, msg) = failed.failure.clone().expect("checked");
            let status = if kind == FailureKind::Timeout {
                EvalStatus::Timeout
            } else {
                EvalStatus::RunFailed
            };
            return Self {
                score: 0.0,
                status,
                error_text: Some(format!(
                    "{kind} on {} instance {} repeat {}: {msg}",
                    failed.job.function, failed.job.instance, failed.job.repeat
                )),
                runs,
                out_of_bounds,
            };
        }
        let score = if runs == 0 {
            0.0
        } else {
            results.iter().map(|r| r.aocc).sum::<f64>() / runs as f64
        };
        Self {
            score,
            status: EvalStatus::Ok,
            error_text: None,
            runs,
            out_of_bounds,
        }
    }
}

struct JobResult {
    job: RunJob,
    aocc: f64,
    out_of_bounds: usize,
    failure: Option<(FailureKind, String)>,
}

/// Empty traces score 0.
fn trace_aocc(run: &BudgetedRun) -> f64 {
    if run.trace().is_empty() {
        0.0
    } else {
        aocc(run.trace()).expect("trace bounds validated up front")
    }
}

pub trait Evaluator: Send + Sync {
    fn settings(&self) -> &EvalSettings;

    fn evaluate(&self, source: &SourceText) -> Evaluation;

    /// Short label recorded in run metadata.
    fn describe(&self) -> String;
}

/// Offline evaluator: runs the built-in random search in-process, seeded by
/// the job and a hash of the normalized source. Different programs get
/// different (but reproducible) scores without executing them.
pub struct ReferenceEvaluator {
    settings: EvalSettings,
}

impl ReferenceEvaluator {
    pub fn new(settings: EvalSettings) -> Self {
        Self { settings }
    }
}

fn source_digest(source: &SourceText) -> String {
    let digest = Sha256::digest(source.joined().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Evaluator for ReferenceEvaluator {
    fn settings(&self) -> &EvalSettings {
        &self.settings
    }

    fn evaluate(&self, source: &SourceText) -> Evaluation {
        let digest = source_digest(source);
        let s = &self.settings;
        let results = s
            .jobs()
            .into_par_iter()
            .map(|job| {
                let problem = Problem::new(job.function, s.dim, job.instance).expect("valid settings");
                let mut run = BudgetedRun::new(problem, s.budget, s.bounds());
                let seed = derive_seed(&[candidate_seed(&job).to_string(), digest.clone()]);
                reference::run_in_process(&mut run, seed).expect("reference search stays in bounds");
                JobResult {
                    job,
                    aocc: trace_aocc(&run),
                    out_of_bounds: run.out_of_bounds(),
                    failure: None,
                }
            })
            .collect();
        Evaluation::from_runs(results)
    }

    fn describe(&self) -> String {
        "reference-random-search".into()
    }
}

/// Runs a command per job; `{source}` in the arguments is replaced by the
/// path of a temporary file holding the candidate's raw source.
pub struct CommandEvaluator {
    settings: EvalSettings,
    program: String,
    args: Vec<String>,
    scratch_dir: Option<PathBuf>,
}

impl CommandEvaluator {
    pub fn new(settings: EvalSettings, program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            settings,
            program: program.into(),
            args,
            scratch_dir: None,
        }
    }

    pub fn with_scratch_dir(mut self, dir: PathBuf) -> Self {
        self.scratch_dir = Some(dir);
        self
    }

    fn write_source(&self, source: &SourceText) -> std::io::Result<tempfile::NamedTempFile> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("candidate-").suffix(".py");
        let mut file = match &self.scratch_dir {
            Some(dir) => builder.tempfile_in(dir)?,
            None => builder.tempfile()?,
        };
        file.write_all(source.raw().as_bytes())?;
        file.flush()?;
        Ok(file)
    }
}

impl Evaluator for CommandEvaluator {
    fn settings(&self) -> &EvalSettings {
        &self.settings
    }

    fn evaluate(&self, source: &SourceText) -> Evaluation {
        let file = match self.write_source(source) {
            Ok(f) => f,
            Err(e) => {
                return Evaluation {
                    score: 0.0,
                    status: EvalStatus::RunFailed,
                    error_text: Some(format!("cannot write candidate source: {e}")),
                    runs: 0,
                    out_of_bounds: 0,
                }
            }
        };
        let path = file.path().display().to_string();
        let command = CandidateCommand::new(
            self.program.clone(),
            self.args.iter().map(|a| a.replace("{source}", &path)),
        );
        let s = &self.settings;
        let results = s
            .jobs()
            .into_par_iter()
            .map(|job| {
                let problem = Problem::new(job.function, s.dim, job.instance).expect("valid settings");
                let out = run_candidate(&command, &problem, s.budget, candidate_seed(&job), s.bounds(), s.timeout());
                let failure = match &out.outcome {
                    RunOutcome::Completed => None,
                    RunOutcome::Failed(f) => {
                        let mut msg = f.message.clone();
                        if let Some(last) = out.stderr_tail.lines().rev().find(|l| !l.trim().is_empty()) {
                            msg.push_str(" | stderr: ");
                            msg.push_str(last.trim());
                        }
                        Some((f.kind, msg))
                    }
                };
                JobResult {
                    job,
                    aocc: trace_aocc(&out.run),
                    out_of_bounds: out.run.out_of_bounds(),
                    failure,
                }
            })
            .collect();
        Evaluation::from_runs(results)
    }

    fn describe(&self) -> String {
        let mut s = self.program.clone();
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        format!("command: {s}")
    }
}
