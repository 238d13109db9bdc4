use super::{EvalError, Problem};
use crate::metrics::{AoccBounds, EvalTrace};

/// One budgeted optimization run: every evaluation appends the best-so-far
/// precision to the trace.
#[derive(Debug, Clone)]
pub struct BudgetedRun {
    problem: Problem,
    budget: usize,
    trace: EvalTrace,
    out_of_bounds: usize,
}

impl BudgetedRun {
    pub fn new(problem: Problem, budget: usize, bounds: AoccBounds) -> Self {
        Self {
            problem,
            budget,
            trace: EvalTrace::empty(budget, bounds),
            out_of_bounds: 0,
        }
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn evals_used(&self) -> usize {
        self.trace.len()
    }

    pub fn evals_left(&self) -> usize {
        self.budget - self.trace.len()
    }

    pub fn trace(&self) -> &EvalTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EvalTrace {
        self.trace
    }

    /// Points evaluated outside `[LOWER, UPPER]^d`.
    pub fn out_of_bounds(&self) -> usize {
        self.out_of_bounds
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64, EvalError> {
        if self.evals_left() == 0 {
            return Err(EvalError::BudgetExhausted(self.budget));
        }
        if x.len() != self.problem.dim() {
            return Err(EvalError::WrongLength {
                expected: self.problem.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        if !self.problem.in_bounds(x) {
            self.out_of_bounds += 1;
        }
        let precision = self.problem.precision(x);
        self.trace.record(precision);
        Ok(self.problem.f_opt() + precision)
    }
}
