//! Shifted continuous test functions in the style of BBOB.
//!
//! Each problem hides an optimum `x_opt` drawn in `[-4, 4]^d` and an offset
//! `f_opt`. Precision `f(x) - f_opt` is computed directly from the shifted
//! coordinates so that it is exactly zero at the optimum.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::seed::rng_for;

pub const LOWER: f64 = -5.0;
pub const UPPER: f64 = 5.0;
const OPT_RANGE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionId {
    Sphere,
    Ellipsoid,
    Rastrigin,
    Rosenbrock,
    DiffPowers,
    Schaffers,
}

impl FunctionId {
    pub const ALL: [FunctionId; 6] = [
        FunctionId::Sphere,
        FunctionId::Ellipsoid,
        FunctionId::Rastrigin,
        FunctionId::Rosenbrock,
        FunctionId::DiffPowers,
        FunctionId::Schaffers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::Sphere => "sphere",
            FunctionId::Ellipsoid => "ellipsoid",
            FunctionId::Rastrigin => "rastrigin",
            FunctionId::Rosenbrock => "rosenbrock",
            FunctionId::DiffPowers => "diff_powers",
            FunctionId::Schaffers => "schaffers",
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| BenchError::UnknownFunction(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    function: FunctionId,
    dim: usize,
    instance_seed: u64,
    x_opt: Vec<f64>,
    f_opt: f64,
}

impl Problem {
    pub fn new(function: FunctionId, dim: usize, instance_seed: u64) -> Result<Self, BenchError> {
        if dim == 0 {
            return Err(BenchError::InvalidDimension);
        }
        let mut rng = rng_for(&[
            "problem".to_string(),
            function.name().to_string(),
            dim.to_string(),
            instance_seed.to_string(),
        ]);
        let x_opt = (0..dim)
            .map(|_| rng.gen_range(-OPT_RANGE..=OPT_RANGE))
            .collect();
        let f_opt = (rng.gen_range(-1000.0..1000.0_f64) * 100.0).round() / 100.0;
        Ok(Self {
            function,
            dim,
            instance_seed,
            x_opt,
            f_opt,
        })
    }

    pub fn function(&self) -> FunctionId {
        self.function
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        x.iter().all(|v| (LOWER..=UPPER).contains(v))
    }

    /// `f(x) - f_opt`; caller guarantees `x.len() == dim`.
    pub fn precision(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect();
        match self.function {
            FunctionId::Sphere => z.iter().map(|v| v * v).sum(),
            FunctionId::Ellipsoid => z
                .iter()
                .enumerate()
                .map(|(i, v)| 10f64.powf(6.0 * ramp(i, self.dim)) * v * v)
                .sum(),
            FunctionId::Rastrigin => z
                .iter()
                .map(|v| v * v + 10.0 * (1.0 - (2.0 * PI * v).cos()))
                .sum(),
            FunctionId::Rosenbrock => {
                let scale = (self.dim as f64).sqrt() / 8.0;
                let scale = scale.max(1.0);
                let z: Vec<f64> = z.iter().map(|v| scale * v + 1.0).collect();
                if z.len() == 1 {
                    return (z[0] - 1.0).powi(2);
                }
                z.windows(2)
                    .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                    .sum()
            }
            FunctionId::DiffPowers => z
                .iter()
                .enumerate()
                .map(|(i, v)| v.abs().powf(2.0 + 4.0 * ramp(i, self.dim)))
                .sum::<f64>()
                .sqrt(),
            FunctionId::Schaffers => {
                let s: Vec<f64> = if z.len() == 1 {
                    vec![z[0].abs()]
                } else {
                    z.windows(2).map(|w| (w[0] * w[0] + w[1] * w[1]).sqrt()).collect()
                };
                let mean = s
                    .iter()
                    .map(|si| {
                        let r = si.sqrt();
                        r + r * (50.0 * si.powf(0.2)).sin().powi(2)
                    })
                    .sum::<f64>()
                    / s.len() as f64;
                mean * mean
            }
        }
    }

    /// Raw objective value `f_opt + precision(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.f_opt + self.precision(x)
    }
}

/// `i / (d - 1)`, or 0 in one dimension.
fn ramp(i: usize, dim: usize) -> f64 {
    if dim <= 1 {
        0.0
    } else {
        i as f64 / (dim - 1) as f64
    }
}

pub fn make_problem(function_id: &str, dim: usize, instance_seed: u64) -> Result<Problem, BenchError> {
    Problem::new(function_id.parse()?, dim, instance_seed)
}
