//! Adherence metrics (log-ratio MSE, target-distribution-weighted score)
//! and the anytime performance measure (area over the convergence curve).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Delivered diffs of exactly zero are replaced by this percentage before
/// taking the log.
pub const ZERO_DIFF_FLOOR: f64 = 0.01;

/// Log base used by [`mse`]; written into report metadata.
pub const LOG_BASE: &str = "e";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("requested rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("delivered diff must be finite and non-negative, got {0}")]
    InvalidDiff(f64),
    #[error("no samples")]
    Empty,
    #[error("duplicate rate {0}")]
    DuplicateRate(f64),
    #[error("beta must be finite, got {0}")]
    InvalidBeta(f64),
    #[error("invalid AOCC bounds: lower {lower}, upper {upper}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("traces use different AOCC bounds")]
    MixedBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdherenceSample {
    pub requested_rate: f64,
    pub delivered_diffs: Vec<f64>,
}

impl AdherenceSample {
    pub fn new(requested_rate: f64, delivered_diffs: Vec<f64>) -> Self {
        Self {
            requested_rate,
            delivered_diffs,
        }
    }
}

/// Mean of `ln^2(d_j / x)` over the delivered diffs.
pub fn mse(sample: &AdherenceSample) -> Result<f64, MetricsError> {
    let x = sample.requested_rate;
    if !(x.is_finite() && x > 0.0) {
        return Err(MetricsError::InvalidRate(x));
    }
    if sample.delivered_diffs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for &d in &sample.delivered_diffs {
        if !(d.is_finite() && d >= 0.0) {
            return Err(MetricsError::InvalidDiff(d));
        }
        let d = if d == 0.0 { ZERO_DIFF_FLOOR } else { d };
        total += (d / x).ln().powi(2);
    }
    Ok(total / sample.delivered_diffs.len() as f64)
}

/// Normalized power-law weights `x_i^-beta / sum_j x_j^-beta`.
pub fn tdw_weights(rates: &[f64], beta: f64) -> Result<Vec<f64>, MetricsError> {
    if !beta.is_finite() {
        return Err(MetricsError::InvalidBeta(beta));
    }
    if rates.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (i, &r) in rates.iter().enumerate() {
        if !(r.is_finite() && r > 0.0) {
            return Err(MetricsError::InvalidRate(r));
        }
        if rates[..i].contains(&r) {
            return Err(MetricsError::DuplicateRate(r));
        }
    }
    let raw: Vec<f64> = rates.iter().map(|r| r.powf(-beta)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `(sum_i w_i * mse_i) / M` over `(rate, mse)` pairs.
pub fn tdw_score(per_rate: &[(f64, f64)], beta: f64) -> Result<f64, MetricsError> {
    let rates: Vec<f64> = per_rate.iter().map(|p| p.0).collect();
    let weights = tdw_weights(&rates, beta)?;
    let weighted: f64 = weights
        .iter()
        .zip(per_rate)
        .map(|(w, &(_, m))| w * m)
        .sum();
    Ok(weighted / per_rate.len() as f64)
}

/// Precision range mapped onto `[0, 1]` on a log10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoccBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for AoccBounds {
    fn default() -> Self {
        Self {
            lower: 1e-8,
            upper: 1e2,
        }
    }
}

impl AoccBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, MetricsError> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let ok = self.lower.is_finite()
            && self.upper.is_finite()
            && self.lower > 0.0
            && self.lower < self.upper;
        if ok {
            Ok(())
        } else {
            Err(MetricsError::InvalidBounds {
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// Per-step contribution `1 - clamp(normalized log precision)`.
    pub fn step_score(&self, precision: f64) -> f64 {
        if precision <= self.lower {
            return 1.0;
        }
        let (lo, hi) = (self.lower.log10(), self.upper.log10());
        let t = ((precision.log10() - lo) / (hi - lo)).clamp(0.0, 1.0);
        1.0 - t
    }
}

/// Best-so-far precision after each evaluation of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    best_so_far: Vec<f64>,
    budget: usize,
    bounds: AoccBounds,
}

impl EvalTrace {
    pub fn empty(budget: usize, bounds: AoccBounds) -> Self {
        Self {
            best_so_far: Vec::with_capacity(budget),
            budget,
            bounds,
        }
    }

    pub fn new(
        best_so_far: Vec<f64>,
        budget: usize,
        bounds: AoccBounds,
    ) -> Result<Self, MetricsError> {
        bounds.validate()?;
        if best_so_far.len() > budget {
            return Err(MetricsError::InvalidTrace(format!(
                "{} entries exceed budget {budget}",
                best_so_far.len()
            )));
        }
        if best_so_far.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(MetricsError::InvalidTrace(
                "precision must be non-negative".into(),
            ));
        }
        if best_so_far.windows(2).any(|w| w[1] > w[0]) {
            return Err(MetricsError::InvalidTrace(
                "best-so-far sequence increases".into(),
            ));
        }
        Ok(Self {
            best_so_far,
            budget,
            bounds,
        })
    }

    /// Record a raw precision; the stored value is the running minimum.
    pub fn record(&mut self, precision: f64) -> f64 {
        let best = match self.best_so_far.last() {
            Some(&b) if b <= precision => b,
            _ => precision,
        };
        self.best_so_far.push(best);
        best
    }

    pub fn best_so_far(&self) -> &[f64] {
        &self.best_so_far
    }

    pub fn best(&self) -> Option<f64> {
        self.best_so_far.last().copied()
    }

    pub fn len(&self) -> usize {
        self.best_so_far.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best_so_far.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn bounds(&self) -> AoccBounds {
        self.bounds
    }

    /// The trace with its final value repeated up to the budget.
    pub fn padded(&self) -> Self {
        let mut out = self.clone();
        if let Some(&last) = self.best_so_far.last() {
            out.best_so_far.resize(self.budget, last);
        }
        out
    }
}

pub fn aocc(trace: &EvalTrace) -> Result<f64, MetricsError> {
    trace.bounds.validate()?;
    let last = trace.best().ok_or(MetricsError::Empty)?;
    let bounds = trace.bounds;
    let observed: f64 = trace
        .best_so_far
        .iter()
        .map(|&y| bounds.step_score(y))
        .sum();
    let carried = (trace.budget - trace.len()) as f64 * bounds.step_score(last);
    Ok((observed + carried) / trace.budget as f64)
}

pub fn mean_aocc<'a, I>(traces: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a EvalTrace>,
{
    let mut bounds: Option<AoccBounds> = None;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in traces {
        match bounds {
            None => bounds = Some(t.bounds),
            Some(b) if b != t.bounds => return Err(MetricsError::MixedBounds),
            _ => {}
        }
        total += aocc(t)?;
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(total / count as f64)
}
