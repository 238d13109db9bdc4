use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::bench::EvalSettings;
use crate::llm::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Adherence,
    Dynamic,
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanKind::Adherence => "adherence",
            PlanKind::Dynamic => "dynamic",
        })
    }
}

/// Which chat backend serves the runs. `sloppy` is the mock with a
/// deliberately poor rate adherence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Mock,
    Sloppy,
    Live,
    Replay,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendChoice::Mock),
            "sloppy" => Ok(BackendChoice::Sloppy),
            "live" => Ok(BackendChoice::Live),
            "replay" => Ok(BackendChoice::Replay),
            _ => Err(format!("unknown backend {s:?} (mock, sloppy, live, replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    pub kind: BackendChoice,
    /// Output directory of a recorded experiment, for `replay`.
    pub replay_dir: Option<PathBuf>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            kind: BackendChoice::Mock,
            replay_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorChoice {
    Reference,
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub evaluator: EvaluatorChoice,
    /// Program and arguments for `command`; `{source}` is replaced by the
    /// candidate file path.
    pub command: Vec<String>,
    #[serde(flatten)]
    pub settings: EvalSettings,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            evaluator: EvaluatorChoice::Reference,
            command: Vec::new(),
            settings: EvalSettings {
                budget: 200,
                ..EvalSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanSection {
    /// Empty means every mutation prompt of the bank.
    pub prompts: Vec<String>,
    pub adherence_rates: Vec<f64>,
    pub adherence_repeats: usize,
    pub dynamic_betas: Vec<f64>,
    pub dynamic_repeats: usize,
    pub generation_budget: usize,
    /// Power-law exponent used for the TDW weights.
    pub tdw_beta: f64,
    /// Worker threads for independent runs; 0 uses all cores.
    pub workers: usize,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            prompts: Vec::new(),
            adherence_rates: vec![2.0, 5.0, 10.0, 20.0, 40.0],
            adherence_repeats: 3,
            dynamic_betas: vec![1.5],
            dynamic_repeats: 5,
            generation_budget: 100,
            tdw_beta: 1.5,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSection {
    /// Prompt bank TOML; the built-in bank when absent.
    pub file: Option<PathBuf>,
}

/// The experiment configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub plan: PlanSection,
    pub model: ModelConfig,
    pub backend: BackendSettings,
    pub eval: EvalConfig,
    pub prompts: PromptSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            plan: PlanSection::default(),
            model: ModelConfig::default(),
            backend: BackendSettings::default(),
            eval: EvalConfig::default(),
            prompts: PromptSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ExperimentError> {
        toml::to_string(self).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Reads a config file; a relative prompt file or replay directory is
    /// resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(f) = cfg.prompts.file.as_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Some(d) = cfg.backend.replay_dir.as_mut() {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(cfg)
    }

    pub fn plan(&self, kind: PlanKind) -> ExperimentPlan {
        let (rates, repeats) = match kind {
            PlanKind::Adherence => (self.plan.adherence_rates.clone(), self.plan.adherence_repeats),
            PlanKind::Dynamic => (self.plan.dynamic_betas.clone(), self.plan.dynamic_repeats),
        };
        ExperimentPlan {
            kind,
            prompts: self.plan.prompts.clone(),
            rates,
            repeats,
            generation_budget: self.plan.generation_budget,
            model: self.model.clone(),
            output_dir: self.output_dir.clone(),
            seed: self.seed,
            backend: self.backend.clone(),
            eval: self.eval.clone(),
            prompt_file: self.prompts.file.clone(),
            tdw_beta: self.plan.tdw_beta,
            workers: self.plan.workers,
        }
    }
}

/// One grid of runs. `rates` are percents for adherence plans and
/// power-law exponents for dynamic plans.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub kind: PlanKind,
    pub prompts: Vec<String>,
    pub rates: Vec<f64>,
    pub repeats: usize,
    pub generation_budget: usize,
    pub model: ModelConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub backend: BackendSettings,
    pub eval: EvalConfig,
    pub prompt_file: Option<PathBuf>,
    pub tdw_beta: f64,
    pub workers: usize,
}

impl ExperimentPlan {
    pub fn adherence() -> Self {
        ExperimentConfig::default().plan(PlanKind::Adherence)
    }

    pub fn dynamic() -> Self {
        ExperimentConfig::default().plan(PlanKind::Dynamic)
    }
}
