//! Discrete power-law distribution over mutation strengths.
//!
//! A mutation strength `alpha` is drawn from `{1, ..., floor(n/2)}` with
//! probability proportional to `alpha^-beta`, where `n` is the number of
//! source lines of the parent program. The requested mutation rate is then
//! `alpha / n`, carried in percent.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerLawError {
    #[error("beta must be a finite positive number, got {0}")]
    InvalidBeta(f64),
    #[error("reference length n must be at least 2, got {0}")]
    LengthTooSmall(usize),
    #[error("alpha {alpha} outside support 1..={max}")]
    OutOfSupport { alpha: usize, max: usize },
}

/// Exponent and reference length of the distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawConfig {
    beta: f64,
    n: usize,
}

impl PowerLawConfig {
    pub fn new(beta: f64, n: usize) -> Result<Self, PowerLawError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PowerLawError::InvalidBeta(beta));
        }
        if n < 2 {
            return Err(PowerLawError::LengthTooSmall(n));
        }
        Ok(Self { beta, n })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest admissible strength, `floor(n/2)`.
    pub fn support_max(&self) -> usize {
        self.n / 2
    }

    /// `(sum_{i=1}^{floor(n/2)} i^-beta)^-1`.
    pub fn normalization(&self) -> f64 {
        // smallest terms first
        let total: f64 = (1..=self.support_max())
            .rev()
            .map(|i| (i as f64).powf(-self.beta))
            .sum();
        1.0 / total
    }

    pub fn pmf(&self, alpha: usize) -> Result<f64, PowerLawError> {
        self.check_support(alpha)?;
        Ok(self.normalization() * (alpha as f64).powf(-self.beta))
    }

    /// Probability table for `alpha = 1..=floor(n/2)` (index 0 is `alpha = 1`).
    pub fn pmf_table(&self) -> Vec<f64> {
        let c = self.normalization();
        (1..=self.support_max())
            .map(|i| c * (i as f64).powf(-self.beta))
            .collect()
    }

    pub fn sampler(&self) -> PowerLawSampler {
        PowerLawSampler::new(*self)
    }

    fn check_support(&self, alpha: usize) -> Result<(), PowerLawError> {
        if alpha == 0 || alpha > self.support_max() {
            return Err(PowerLawError::OutOfSupport {
                alpha,
                max: self.support_max(),
            });
        }
        Ok(())
    }
}

/// Inverse-CDF sampler over a precomputed cumulative table.
#[derive(Debug, Clone)]
pub struct PowerLawSampler {
    config: PowerLawConfig,
    cumulative: Vec<f64>,
}

impl PowerLawSampler {
    pub fn new(config: PowerLawConfig) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=config.support_max())
            .map(|i| {
                acc += (i as f64).powf(-config.beta);
                acc
            })
            .collect();
        Self { config, cumulative }
    }

    pub fn config(&self) -> &PowerLawConfig {
        &self.config
    }

    pub fn sample_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("support is non-empty");
        let u = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1) + 1
    }

    /// `100 * alpha / n`.
    pub fn sample_rate_percent<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rate_percent(self.sample_alpha(rng), self.config.n)
    }
}

pub fn normalization(config: &PowerLawConfig) -> f64 {
    config.normalization()
}

pub fn pmf(alpha: usize, config: &PowerLawConfig) -> Result<f64, PowerLawError> {
    config.pmf(alpha)
}

pub fn sample_alpha<R: Rng + ?Sized>(config: &PowerLawConfig, rng: &mut R) -> usize {
    config.sampler().sample_alpha(rng)
}

pub fn sample_rate_percent<R: Rng + ?Sized>(config: &PowerLawConfig, rng: &mut R) -> f64 {
    config.sampler().sample_rate_percent(rng)
}

pub fn rate_percent(alpha: usize, n: usize) -> f64 {
    100.0 * alpha as f64 / n as f64
}
