//! Benchmark problems, budgeted evaluation, and candidate execution.

mod evaluator;
mod functions;
pub mod protocol;
pub mod reference;
mod run;

use thiserror::Error;

pub use evaluator::{
    candidate_seed, CommandEvaluator, EvalSettings, EvalStatus, Evaluation, Evaluator, ReferenceEvaluator, RunJob,
};
pub use functions::{make_problem, FunctionId, Problem, LOWER, UPPER};
pub use protocol::{run_candidate, CandidateCommand, CandidateRun, FailureKind, RunFailure, RunOutcome};
pub use run::BudgetedRun;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("unknown function id {0:?}")]
    UnknownFunction(String),
    #[error("dimension must be at least 1")]
    InvalidDimension,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("evaluation budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("point has {got} coordinates, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("point has non-finite coordinates")]
    NonFinite,
}
