use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{BackendChoice, EvalConfig, EvaluatorChoice, ExperimentPlan, PlanKind};
use super::report::{build_report, ReportBundle};
use super::ExperimentError;
use crate::bench::{CommandEvaluator, Evaluator, ReferenceEvaluator};
use crate::evolution::{evolve, EvolutionConfig, RatePolicy, RunSink};
use crate::llm::{Backend, LiveBackend, MockBackend, MockStyle, ReplayBackend};
use crate::promptbank::{builtin_bank, builtin_task_prompt, PromptBank, PromptKind};
use crate::seed::derive_seed;

/// Marker written into a run directory whose run was abandoned.
pub const ABORTED_FILE: &str = "aborted.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub prompt_id: String,
    pub policy: RatePolicy,
    pub repeat: usize,
    pub seed: u64,
}

impl RunSpec {
    /// Seed is `hash(master, prompt, rate, repeat)`, independent of run order.
    pub fn new(master_seed: u64, prompt_id: &str, policy: RatePolicy, repeat: usize) -> Self {
        let (tag, value) = match policy {
            RatePolicy::Fixed { rate } => ("x", rate),
            RatePolicy::Dynamic { beta } => ("b", beta),
        };
        let seed = derive_seed(&[
            master_seed.to_string(),
            prompt_id.to_string(),
            value.to_string(),
            repeat.to_string(),
        ]);
        Self {
            run_id: format!("{prompt_id}_{tag}{value}_{repeat}"),
            prompt_id: prompt_id.to_owned(),
            policy,
            repeat,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionSummary {
    pub completed: usize,
    pub aborted: usize,
}

pub fn load_bank(plan: &ExperimentPlan) -> Result<PromptBank, ExperimentError> {
    Ok(match &plan.prompt_file {
        Some(path) => PromptBank::load(path)?,
        None => builtin_bank(),
    })
}

/// The plan's prompt ids, or every mutation prompt of the bank.
pub fn plan_prompts(plan: &ExperimentPlan, bank: &PromptBank) -> Result<Vec<String>, ExperimentError> {
    if plan.prompts.is_empty() {
        return Ok(bank
            .templates()
            .iter()
            .filter(|t| t.kind == PromptKind::Mutation)
            .map(|t| t.id.clone())
            .collect());
    }
    for id in &plan.prompts {
        bank.get(id)?;
    }
    Ok(plan.prompts.clone())
}

pub fn plan_runs(plan: &ExperimentPlan, prompts: &[String]) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for prompt in prompts {
        for &value in &plan.rates {
            let policy = match plan.kind {
                PlanKind::Adherence => RatePolicy::Fixed { rate: value },
                PlanKind::Dynamic => RatePolicy::Dynamic { beta: value },
            };
            for repeat in 0..plan.repeats {
                out.push(RunSpec::new(plan.seed, prompt, policy, repeat));
            }
        }
    }
    out
}

pub fn runs_dir(output_dir: &Path) -> PathBuf {
    output_dir.join("runs")
}

pub fn build_backend(plan: &ExperimentPlan, spec: &RunSpec) -> Result<Box<dyn Backend>, ExperimentError> {
    Ok(match plan.backend.kind {
        BackendChoice::Mock => Box::new(MockBackend::new(MockStyle::Exact, spec.seed)),
        BackendChoice::Sloppy => Box::new(MockBackend::new(MockStyle::Sloppy, spec.seed)),
        BackendChoice::Live => Box::new(LiveBackend::from_env(plan.model.clone())?),
        BackendChoice::Replay => {
            let dir = plan
                .backend
                .replay_dir
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("replay backend needs backend.replay_dir".into()))?;
            let path = runs_dir(dir).join(&spec.run_id).join("transcript.jsonl");
            Box::new(ReplayBackend::from_file(&path, &spec.run_id)?)
        }
    })
}

pub fn build_evaluator(eval: &EvalConfig) -> Result<Box<dyn Evaluator>, ExperimentError> {
    eval.settings.bounds().validate()?;
    if eval.settings.functions.is_empty() || eval.settings.instances.is_empty() || eval.settings.repeats == 0 {
        return Err(ExperimentError::Config("eval grid is empty".into()));
    }
    if eval.settings.dim == 0 || eval.settings.budget == 0 {
        return Err(ExperimentError::Config("eval dim and budget must be positive".into()));
    }
    Ok(match eval.evaluator {
        EvaluatorChoice::Reference => Box::new(ReferenceEvaluator::new(eval.settings.clone())),
        EvaluatorChoice::Command => {
            let (program, args) = eval
                .command
                .split_first()
                .ok_or_else(|| ExperimentError::Config("command evaluator needs eval.command".into()))?;
            Box::new(CommandEvaluator::new(eval.settings.clone(), program.clone(), args.to_vec()))
        }
    })
}

fn replay_guard(plan: &ExperimentPlan) -> Result<(), ExperimentError> {
    if plan.backend.kind != BackendChoice::Replay {
        return Ok(());
    }
    if let Some(dir) = &plan.backend.replay_dir {
        let same = match (fs::canonicalize(dir), fs::canonicalize(&plan.output_dir)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if same {
            return Err(ExperimentError::Config(
                "replay output_dir must differ from the recorded directory".into(),
            ));
        }
    }
    Ok(())
}

/// Runs one evolution into `<output_dir>/runs/<run_id>`. A run that cannot
/// start or dies mid-way leaves an [`ABORTED_FILE`] marker and returns the
/// error.
pub fn run_single(
    plan: &ExperimentPlan,
    spec: &RunSpec,
    bank: &PromptBank,
    evaluator: &dyn Evaluator,
) -> Result<(), ExperimentError> {
    let dir = runs_dir(&plan.output_dir).join(&spec.run_id);
    let result = (|| {
        let prompt = bank.get(&spec.prompt_id)?;
        let task = builtin_task_prompt();
        let mut backend = build_backend(plan, spec)?;
        let mut sink = RunSink::create(&dir)?;
        let _ = fs::remove_file(dir.join(ABORTED_FILE));
        let config = EvolutionConfig {
            run_id: spec.run_id.clone(),
            prompt_id: spec.prompt_id.clone(),
            rate_policy: spec.policy,
            generation_budget: plan.generation_budget,
            seed: spec.seed,
            model_name: plan.model.model_name.clone(),
        };
        evolve(&config, &task, prompt, backend.as_mut(), evaluator, Some(&mut sink))?;
        Ok(())
    })();
    if let Err(e) = &result {
        let _ = fs::create_dir_all(&dir);
        let _ = fs::write(dir.join(ABORTED_FILE), format!("{e}\n"));
    }
    result
}

/// Executes every run of the plan on a bounded pool.
pub fn execute(plan: &ExperimentPlan) -> Result<ExecutionSummary, ExperimentError> {
    replay_guard(plan)?;
    let bank = load_bank(plan)?;
    let prompts = plan_prompts(plan, &bank)?;
    let evaluator = build_evaluator(&plan.eval)?;
    let specs = plan_runs(plan, &prompts);
    fs::create_dir_all(runs_dir(&plan.output_dir))
        .map_err(|e| ExperimentError::Io(format!("{}: {e}", plan.output_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let outcomes: Vec<bool> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| match run_single(plan, spec, &bank, evaluator.as_ref()) {
                Ok(()) => true,
                Err(e) => {
                    log::warn!("run {} aborted: {e}", spec.run_id);
                    false
                }
            })
            .collect()
    });
    let completed = outcomes.iter().filter(|ok| **ok).count();
    let summary = ExecutionSummary {
        completed,
        aborted: outcomes.len() - completed,
    };
    if summary.aborted > 0 {
        log::warn!("{} of {} runs aborted", summary.aborted, outcomes.len());
    }
    Ok(summary)
}

fn run_kind(plan: &ExperimentPlan, kind: PlanKind) -> Result<ReportBundle, ExperimentError> {
    if plan.kind != kind {
        return Err(ExperimentError::Config(format!("expected a {kind} plan, got {}", plan.kind)));
    }
    execute(plan)?;
    build_report(&plan.output_dir, plan.tdw_beta)
}

pub fn run_adherence(plan: &ExperimentPlan) -> Result<ReportBundle, ExperimentError> {
    run_kind(plan, PlanKind::Adherence)
}

pub fn run_dynamic(plan: &ExperimentPlan) -> Result<ReportBundle, ExperimentError> {
    run_kind(plan, PlanKind::Dynamic)
}
