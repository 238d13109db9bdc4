//! Experiment plans (adherence grids and dynamic-rate runs), their
//! execution on a worker pool, and report emission from run logs.

mod config;
mod report;
mod runner;
mod svg;

use thiserror::Error;

pub use config::{
    BackendChoice, BackendSettings, EvalConfig, EvaluatorChoice, ExperimentConfig, ExperimentPlan, PlanKind,
    PlanSection, PromptSection,
};
pub use report::{
    build_report, emit_reports, natural_cmp, read_run, CodeDiffRow, ConvergenceRow, LoadedRun, MseCell,
    ReportBundle, ReportSummary, ScatterPoint,
};
pub use runner::{
    build_backend, build_evaluator, execute, load_bank, plan_prompts, plan_runs, run_adherence, run_dynamic,
    run_single, ExecutionSummary, RunSpec,
};
pub use svg::convergence_svg;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Prompt(#[from] crate::promptbank::PromptError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Evolution(#[from] crate::evolution::EvolutionError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("run log {path}: {message}")]
    Log { path: String, message: String },
}
