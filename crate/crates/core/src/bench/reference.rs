//! Built-in reference candidate: uniform random search speaking the
//! ask/tell protocol.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::{CandidateMessage, HarnessMessage};
use super::{BudgetedRun, EvalError};

pub struct RandomSearch {
    rng: ChaCha8Rng,
    dim: usize,
    lower: f64,
    upper: f64,
}

impl RandomSearch {
    pub fn new(seed: u64, dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            lower,
            upper,
        }
    }

    pub fn ask(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|_| self.rng.gen_range(self.lower..self.upper))
            .collect()
    }
}

/// Spends the whole budget of `run` in-process. Produces the same trace as
/// the subprocess candidate given the same seed.
pub fn run_in_process(run: &mut BudgetedRun, seed: u64) -> Result<(), EvalError> {
    let mut search = RandomSearch::new(seed, run.problem().dim(), super::LOWER, super::UPPER);
    while run.evals_left() > 0 {
        let x = search.ask();
        run.evaluate(&x)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeSummary {
    pub asks: usize,
    pub stopped: bool,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Candidate side of the protocol: read `init`, then ask until told no
/// evaluations are left, `stop` arrives, or input ends.
pub fn serve<R: BufRead, W: Write>(mut input: R, mut output: W) -> io::Result<ServeSummary> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(invalid("no init message"));
    }
    let (dim, budget, lower, upper, seed) = match serde_json::from_str(&line) {
        Ok(HarnessMessage::Init {
            dim,
            budget,
            lower,
            upper,
            seed,
        }) => (dim, budget, lower, upper, seed),
        Ok(other) => return Err(invalid(format!("expected init, got {other:?}"))),
        Err(e) => return Err(invalid(format!("malformed init: {e}"))),
    };
    let mut search = RandomSearch::new(seed, dim, lower, upper);
    let mut summary = ServeSummary {
        asks: 0,
        stopped: false,
    };
    let mut remaining = budget;
    while remaining > 0 {
        let ask = CandidateMessage::Ask { x: search.ask() };
        writeln!(output, "{}", serde_json::to_string(&ask).map_err(|e| invalid(e.to_string()))?)?;
        output.flush()?;
        summary.asks += 1;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        match serde_json::from_str(&line) {
            Ok(HarnessMessage::Tell { evals_left, .. }) => remaining = evals_left,
            Ok(HarnessMessage::Stop) => {
                summary.stopped = true;
                break;
            }
            Ok(other) => return Err(invalid(format!("unexpected {other:?}"))),
            Err(e) => return Err(invalid(format!("malformed reply: {e}"))),
        }
    }
    Ok(summary)
}
