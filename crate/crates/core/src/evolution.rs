//! The (1+1) elitist loop: generate a seed program, then repeatedly mutate
//! the incumbent at a requested rate, measure the delivered diff, score the
//! child, and keep it only if it strictly improves on the parent.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{EvalSettings, EvalStatus, Evaluator};
use crate::codediff::{self, SourceText};
use crate::llm::{
    extract_code, Backend, ChatMessage, ChatRequest, LlmError, RequestIntent, TranscriptEntry, TranscriptLog,
};
use crate::metrics::{self, AoccBounds};
use crate::powerlaw::{PowerLawConfig, PowerLawError};
use crate::promptbank::{render, PromptError, PromptTemplate, RenderedPrompt};
use crate::seed::rng_for;

/// Extra attempts for the seed program before the run is abandoned.
pub const INITIAL_RETRIES: usize = 3;

/// User message of the generation request.
pub const GENERATION_REQUEST: &str = "Write the first version of the algorithm.";

/// Describes how mutation feedback is assembled; stored in run metadata.
pub const FEEDBACK_POLICY: &str = "previous-failed-child-one-line";

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("generation budget must be at least 2, got {0}")]
    BudgetTooSmall(usize),
    #[error("fixed rate must lie in (0, 100), got {0}")]
    InvalidRate(f64),
    #[error("initial program could not be generated after {attempts} attempt(s): {last}")]
    InitialGenerationFailed { attempts: usize, last: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    PowerLaw(#[from] PowerLawError),
    #[error("instance {0} has no score")]
    Unscored(usize),
    #[error("run log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum RatePolicy {
    Fixed { rate: f64 },
    Dynamic { beta: f64 },
}

impl fmt::Display for RatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatePolicy::Fixed { rate } => write!(f, "fixed:{rate}"),
            RatePolicy::Dynamic { beta } => write!(f, "dynamic:{beta}"),
        }
    }
}

impl FromStr for RatePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s.split_once(':').ok_or_else(|| format!("bad rate policy {s:?}"))?;
        let value: f64 = value.parse().map_err(|_| format!("bad rate policy {s:?}"))?;
        match kind {
            "fixed" => Ok(RatePolicy::Fixed { rate: value }),
            "dynamic" => Ok(RatePolicy::Dynamic { beta: value }),
            _ => Err(format!("bad rate policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Ok,
    GenerationFailed,
    ExtractFailed,
    RunFailed,
    Timeout,
}

impl InstanceStatus {
    pub fn is_failure(self) -> bool {
        self != InstanceStatus::Ok
    }
}

impl From<EvalStatus> for InstanceStatus {
    fn from(s: EvalStatus) -> Self {
        match s {
            EvalStatus::Ok => InstanceStatus::Ok,
            EvalStatus::RunFailed => InstanceStatus::RunFailed,
            EvalStatus::Timeout => InstanceStatus::Timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeInstance {
    /// Generation index, 1-based.
    pub instance_id: usize,
    pub parent_id: Option<usize>,
    pub source: SourceText,
    pub requested_rate: Option<f64>,
    pub delivered_diff: Option<f64>,
    pub score: Option<f64>,
    pub status: InstanceStatus,
    pub error_text: Option<String>,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub gen: usize,
    pub parent_id: Option<usize>,
    pub prompt_id: String,
    pub requested_rate: Option<f64>,
    pub delivered_diff: Option<f64>,
    pub score: Option<f64>,
    pub accepted: bool,
    pub status: InstanceStatus,
    pub error_text: Option<String>,
    pub rate_policy: String,
    pub seed: u64,
    /// Normalized line count of the parent the child was diffed against.
    pub parent_lines: Option<usize>,
    pub out_of_bounds: usize,
}

/// Settings and provenance written once per run to `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub prompt_id: String,
    pub rate_policy: RatePolicy,
    pub seed: u64,
    pub generation_budget: usize,
    pub model: String,
    pub backend: String,
    pub evaluator: String,
    pub eval: EvalSettings,
    pub aocc_bounds: AoccBounds,
    pub diff_normalization: String,
    pub mse_log_base: String,
    pub zero_diff_floor: f64,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub run_id: String,
    pub prompt_id: String,
    pub rate_policy: RatePolicy,
    pub generation_budget: usize,
    pub seed: u64,
    pub model_name: String,
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if self.generation_budget < 2 {
            return Err(EvolutionError::BudgetTooSmall(self.generation_budget));
        }
        match self.rate_policy {
            RatePolicy::Fixed { rate } if !(rate > 0.0 && rate < 100.0) => Err(EvolutionError::InvalidRate(rate)),
            RatePolicy::Dynamic { beta } => {
                PowerLawConfig::new(beta, 2)?;
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// On-disk layout of one run:
/// `meta.json`, `records.jsonl`, `transcript.jsonl`, `code/<gen>.txt`.
pub struct RunSink {
    dir: PathBuf,
    records: File,
    transcript: TranscriptLog,
}

impl RunSink {
    pub fn create(dir: &Path) -> Result<Self, EvolutionError> {
        let log = |e: std::io::Error| EvolutionError::Log(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir.join("code")).map_err(log)?;
        let records_path = dir.join("records.jsonl");
        let transcript_path = dir.join("transcript.jsonl");
        // a run directory is written from scratch
        for p in [&records_path, &transcript_path] {
            if p.exists() {
                fs::remove_file(p).map_err(log)?;
            }
        }
        let records = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&records_path)
            .map_err(log)?;
        let transcript = TranscriptLog::create(&transcript_path).map_err(|e| EvolutionError::Log(e.to_string()))?;
        Ok(Self {
            dir: dir.to_owned(),
            records,
            transcript,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn io(&self, e: impl fmt::Display) -> EvolutionError {
        EvolutionError::Log(format!("{}: {e}", self.dir.display()))
    }

    pub fn write_meta(&self, meta: &RunMeta) -> Result<(), EvolutionError> {
        let text = serde_json::to_string_pretty(meta).map_err(|e| self.io(e))?;
        fs::write(self.dir.join("meta.json"), text + "\n").map_err(|e| self.io(e))
    }

    pub fn write_record(&mut self, record: &RunRecord) -> Result<(), EvolutionError> {
        let mut line = serde_json::to_string(record).map_err(|e| self.io(e))?;
        line.push('\n');
        self.records.write_all(line.as_bytes()).map_err(|e| self.io(e))
    }

    pub fn write_code(&self, gen: usize, source: &SourceText) -> Result<(), EvolutionError> {
        fs::write(self.dir.join("code").join(format!("{gen}.txt")), source.raw()).map_err(|e| self.io(e))
    }

    pub fn transcript(&self) -> &TranscriptLog {
        &self.transcript
    }
}

pub fn select<'a>(parent: &'a CodeInstance, child: &'a CodeInstance) -> Result<&'a CodeInstance, EvolutionError> {
    let p = parent.score.ok_or(EvolutionError::Unscored(parent.instance_id))?;
    let c = child.score.ok_or(EvolutionError::Unscored(child.instance_id))?;
    Ok(if c > p { child } else { parent })
}

pub fn build_mutation_messages(
    task_prompt: &str,
    parent: &CodeInstance,
    rendered: &RenderedPrompt,
    last_error: Option<&str>,
) -> Vec<ChatMessage> {
    let mut user = String::new();
    user.push_str("The selected solution to update is:\n```python\n");
    user.push_str(parent.source.raw().trim_end_matches('\n'));
    user.push_str("\n```\n\n");
    user.push_str(&rendered.text);
    if let Some(err) = last_error {
        user.push_str("\n\nThe previous attempt failed: ");
        user.push_str(err);
    }
    vec![ChatMessage::system(task_prompt), ChatMessage::user(user)]
}

/// First line of an error, clipped, for feedback in the next prompt.
fn one_line(text: &str) -> String {
    let line = text.lines().next().unwrap_or("").trim();
    let clipped: String = line.chars().take(200).collect();
    if clipped.len() < line.len() {
        format!("{clipped}...")
    } else {
        clipped
    }
}

pub struct EvolutionResult {
    pub best: CodeInstance,
    pub instances: Vec<CodeInstance>,
    pub records: Vec<RunRecord>,
}

pub struct Evolution<'a> {
    pub config: &'a EvolutionConfig,
    pub task: &'a PromptTemplate,
    pub prompt: &'a PromptTemplate,
    pub backend: &'a mut dyn Backend,
    pub evaluator: &'a dyn Evaluator,
    pub sink: Option<&'a mut RunSink>,
}

struct Loop<'a, 'b> {
    ev: &'b mut Evolution<'a>,
    step: usize,
    records: Vec<RunRecord>,
}

impl Loop<'_, '_> {
    fn exchange(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let ex = self.ev.backend.complete(request)?;
        if let Some(sink) = self.ev.sink.as_deref() {
            let entry = TranscriptEntry::from_exchange(&self.ev.config.run_id, self.step, &self.ev.config.model_name, &ex);
            if let Err(e) = sink.transcript().append(&entry) {
                log::warn!("{e}");
            }
        }
        self.step += 1;
        Ok(ex.response_text)
    }

    fn record(&mut self, inst: &CodeInstance, accepted: bool, parent_lines: Option<usize>, oob: usize) -> Result<(), EvolutionError> {
        let cfg = self.ev.config;
        let rec = RunRecord {
            run_id: cfg.run_id.clone(),
            gen: inst.instance_id,
            parent_id: inst.parent_id,
            prompt_id: cfg.prompt_id.clone(),
            requested_rate: inst.requested_rate,
            delivered_diff: inst.delivered_diff,
            score: inst.score,
            accepted,
            status: inst.status,
            error_text: inst.error_text.clone(),
            rate_policy: cfg.rate_policy.to_string(),
            seed: cfg.seed,
            parent_lines,
            out_of_bounds: oob,
        };
        if let Some(sink) = self.ev.sink.as_deref_mut() {
            sink.write_record(&rec)?;
            if !inst.source.is_empty() {
                sink.write_code(inst.instance_id, &inst.source)?;
            }
        }
        self.records.push(rec);
        Ok(())
    }

    fn initial(&mut self) -> Result<CodeInstance, EvolutionError> {
        let request = ChatRequest {
            messages: vec![
                ChatMessage::system(self.ev.task.body.clone()),
                ChatMessage::user(GENERATION_REQUEST),
            ],
            intent: RequestIntent::Generation,
        };
        let attempts = INITIAL_RETRIES + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            let source = match self.exchange(&request) {
                Ok(text) => extract_code(&text).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            match source {
                Ok(source) => {
                    let eval = self.ev.evaluator.evaluate(&source);
                    let inst = CodeInstance {
                        instance_id: 1,
                        parent_id: None,
                        source,
                        requested_rate: None,
                        delivered_diff: None,
                        score: Some(eval.score),
                        status: eval.status.into(),
                        error_text: eval.error_text,
                    };
                    self.record(&inst, true, None, eval.out_of_bounds)?;
                    return Ok(inst);
                }
                Err(e) => {
                    log::warn!("{}: initial generation failed: {e}", self.ev.config.run_id);
                    last = e;
                }
            }
        }
        Err(EvolutionError::InitialGenerationFailed { attempts, last })
    }

    fn requested_rate(&self, parent: &CodeInstance, rng: &mut ChaCha8Rng) -> Result<f64, EvolutionError> {
        Ok(match self.ev.config.rate_policy {
            RatePolicy::Fixed { rate } => rate,
            RatePolicy::Dynamic { beta } => {
                // a one-line parent still gets the smallest admissible support
                let n = parent.source.line_count().max(2);
                PowerLawConfig::new(beta, n)?.sampler().sample_rate_percent(rng)
            }
        })
    }

    fn mutate(&mut self, gen: usize, parent: &CodeInstance, rate: f64, last_error: Option<&str>) -> Result<(CodeInstance, usize), EvolutionError> {
        let rendered = render(self.ev.prompt, rate, &parent.source, &self.ev.config.model_name)?;
        let request = ChatRequest {
            messages: build_mutation_messages(&self.ev.task.body, parent, &rendered, last_error),
            intent: RequestIntent::Mutation {
                parent: parent.source.clone(),
                rate_percent: rate,
            },
        };
        let mut child = CodeInstance {
            instance_id: gen,
            parent_id: Some(parent.instance_id),
            source: SourceText::default(),
            requested_rate: Some(rate),
            delivered_diff: None,
            score: Some(0.0),
            status: InstanceStatus::Ok,
            error_text: None,
        };
        let text = match self.exchange(&request) {
            Ok(t) => t,
            Err(e) => {
                child.status = InstanceStatus::GenerationFailed;
                child.error_text = Some(e.to_string());
                return Ok((child, 0));
            }
        };
        let source = match extract_code(&text) {
            Ok(s) => s,
            Err(e) => {
                child.status = InstanceStatus::ExtractFailed;
                child.error_text = Some(e.to_string());
                return Ok((child, 0));
            }
        };
        child.delivered_diff = Some(codediff::diff_percent(&parent.source, &source).expect("parent source is non-empty"));
        let eval = self.ev.evaluator.evaluate(&source);
        child.source = source;
        child.score = Some(eval.score);
        child.status = eval.status.into();
        child.error_text = eval.error_text;
        Ok((child, eval.out_of_bounds))
    }
}

impl Evolution<'_> {
    pub fn meta(&self, backend_label: &str) -> RunMeta {
        let eval = self.evaluator.settings().clone();
        RunMeta {
            run_id: self.config.run_id.clone(),
            prompt_id: self.config.prompt_id.clone(),
            rate_policy: self.config.rate_policy,
            seed: self.config.seed,
            generation_budget: self.config.generation_budget,
            model: self.config.model_name.clone(),
            backend: backend_label.to_owned(),
            evaluator: self.evaluator.describe(),
            aocc_bounds: eval.bounds(),
            eval,
            diff_normalization: codediff::NORMALIZATION_TAG.to_owned(),
            mse_log_base: metrics::LOG_BASE.to_owned(),
            zero_diff_floor: metrics::ZERO_DIFF_FLOOR,
            feedback: FEEDBACK_POLICY.to_owned(),
        }
    }

    pub fn run(&mut self) -> Result<EvolutionResult, EvolutionError> {
        self.config.validate()?;
        if let Some(sink) = self.sink.as_deref() {
            sink.write_meta(&self.meta(&self.backend.kind().to_string()))?;
        }
        let budget = self.config.generation_budget;
        let mut rate_rng = rng_for(&["rates".to_string(), self.config.seed.to_string()]);
        let mut lp = Loop {
            ev: self,
            step: 0,
            records: Vec::with_capacity(budget),
        };
        let mut incumbent = lp.initial()?;
        let mut instances = vec![incumbent.clone()];
        let mut last_error: Option<String> = None;
        for gen in 2..=budget {
            let rate = lp.requested_rate(&incumbent, &mut rate_rng)?;
            let parent_lines = incumbent.source.line_count();
            let (child, oob) = lp.mutate(gen, &incumbent, rate, last_error.as_deref())?;
            let accepted = std::ptr::eq(select(&incumbent, &child)?, &child);
            lp.record(&child, accepted, Some(parent_lines), oob)?;
            last_error = if child.status.is_failure() {
                child.error_text.as_deref().map(one_line)
            } else {
                None
            };
            if accepted {
                incumbent = child.clone();
            }
            instances.push(child);
        }
        Ok(EvolutionResult {
            best: incumbent,
            instances,
            records: lp.records,
        })
    }
}

/// Runs the loop; see [`Evolution`].
pub fn evolve(
    config: &EvolutionConfig,
    task: &PromptTemplate,
    prompt: &PromptTemplate,
    backend: &mut dyn Backend,
    evaluator: &dyn Evaluator,
    sink: Option<&mut RunSink>,
) -> Result<EvolutionResult, EvolutionError> {
    Evolution {
        config,
        task,
        prompt,
        backend,
        evaluator,
        sink,
    }
    .run()
}

/// Incumbent score after each generation, reconstructed from records.
pub fn incumbent_scores(records: &[RunRecord]) -> Vec<f64> {
    let mut best: Option<f64> = None;
    records
        .iter()
        .map(|r| {
            if r.accepted {
                best = r.score.or(best);
            }
            best.unwrap_or(0.0)
        })
        .collect()
}
