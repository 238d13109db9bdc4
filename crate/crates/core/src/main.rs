use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mutctl::bench::reference;
use mutctl::codediff::{diff_percent, SourceText};
use mutctl::evolution::RatePolicy;
use mutctl::experiment::{
    build_evaluator, build_report, emit_reports, load_bank, run_single, BackendChoice, ExperimentConfig,
    ExperimentPlan, PlanKind, ReportBundle, RunSpec,
};
use mutctl::llm::{Backend, ChatMessage, ChatRequest, LiveBackend, RequestIntent};
use mutctl::powerlaw::PowerLawConfig;
use mutctl::promptbank::{builtin_bank, render, PromptKind};
use mutctl::seed::rng_for;

#[derive(Parser)]
#[command(name = "mutctl", version, about = "Controlled-mutation algorithm evolution harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw mutation rates from the power law.
    Sample {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Line-level difference between two files, in percent.
    Diff { a: PathBuf, b: PathBuf },
    /// MSE grid and TDW scores from run logs.
    Score {
        /// Output directory of a run batch, or its runs/ subdirectory.
        #[arg(long)]
        runs: PathBuf,
        /// Also write mse_grid.csv, tdw.csv and mse_counts.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// TDW weight exponent.
        #[arg(long, default_value_t = 1.5)]
        beta: f64,
    },
    /// One evolution run.
    Evolve {
        #[command(flatten)]
        common: RunArgs,
        /// Prompt id; defaults to the first planned prompt.
        #[arg(long)]
        prompt: Option<String>,
        /// Fixed mutation rate in percent.
        #[arg(long, conflicts_with = "beta")]
        rate: Option<f64>,
        /// Power-law exponent for a dynamic rate.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Fixed-rate grid over prompts x rates x repeats, then reports.
    Adherence {
        #[command(flatten)]
        common: RunArgs,
    },
    /// Dynamic-rate runs per prompt x repeat, then reports.
    Dynamic {
        #[command(flatten)]
        common: RunArgs,
    },
    /// CSV and SVG reports from run logs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TDW weight exponent.
        #[arg(long, default_value_t = 1.5)]
        beta: f64,
    },
    /// Render the prompt-authoring meta prompt; with --live, send it.
    GenPrompts {
        #[arg(long)]
        model: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        live: bool,
    },
    /// Built-in random-search candidate speaking the ask/tell protocol on stdio.
    CandidateEcho,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// mock, sloppy, live or replay.
    #[arg(long)]
    backend: Option<BackendChoice>,
    /// Output directory; overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Generations per run, including the initial program.
    #[arg(long)]
    generations: Option<usize>,
    /// Earlier output directory whose transcripts the replay backend reads.
    #[arg(long)]
    replay_dir: Option<PathBuf>,
}

impl RunArgs {
    fn plan(&self, kind: PlanKind) -> Result<ExperimentPlan> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(b) = self.backend {
            cfg.backend.kind = b;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = self.generations {
            cfg.plan.generation_budget = g;
        }
        if let Some(d) = &self.replay_dir {
            cfg.backend.replay_dir = Some(d.clone());
        }
        Ok(cfg.plan(kind))
    }
}

/// Accepts either an output directory or its `runs` subdirectory.
fn output_root(dir: &Path) -> PathBuf {
    if !dir.join("runs").is_dir() && dir.file_name().is_some_and(|n| n == "runs") {
        if let Some(parent) = dir.parent() {
            return parent.to_owned();
        }
    }
    dir.to_owned()
}

fn print_summary(bundle: &ReportBundle, out: &Path) {
    let s = &bundle.summary;
    println!(
        "runs: {} completed, {} aborted; reports in {}",
        s.runs_completed,
        s.runs_aborted,
        out.display()
    );
}

fn run_grid(common: &RunArgs, kind: PlanKind) -> Result<()> {
    let plan = common.plan(kind)?;
    let summary = mutctl::experiment::execute(&plan)?;
    let bundle = build_report(&plan.output_dir, plan.tdw_beta)?;
    let out = plan.output_dir.join("report");
    emit_reports(&bundle, &out)?;
    print_summary(&bundle, &out);
    if summary.completed == 0 && summary.aborted > 0 {
        bail!("every run aborted");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { beta, n, count, seed } => {
            let sampler = PowerLawConfig::new(beta, n)?.sampler();
            let mut rng = rng_for(&["sample".to_string(), seed.to_string()]);
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            for _ in 0..count {
                writeln!(w, "{}", sampler.sample_rate_percent(&mut rng))?;
            }
            w.flush()?;
        }
        Command::Diff { a, b } => {
            let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
            let (a, b) = (SourceText::normalize(&read(&a)?), SourceText::normalize(&read(&b)?));
            println!("{:?}", diff_percent(&a, &b)?);
        }
        Command::Score { runs, out, beta } => {
            let bundle = build_report(&output_root(&runs), beta)?;
            print!("{}", bundle.mse_grid_csv());
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                std::fs::write(out.join("mse_grid.csv"), bundle.mse_grid_csv())?;
                std::fs::write(out.join("tdw.csv"), bundle.tdw_csv())?;
                std::fs::write(out.join("mse_counts.csv"), bundle.mse_counts_csv())?;
            }
        }
        Command::Evolve {
            common,
            prompt,
            rate,
            beta,
            repeat,
        } => {
            let kind = if beta.is_some() { PlanKind::Dynamic } else { PlanKind::Adherence };
            let plan = common.plan(kind)?;
            let bank = load_bank(&plan)?;
            let prompt = prompt
                .or_else(|| plan.prompts.first().cloned())
                .unwrap_or_else(|| "prompt1".to_string());
            let policy = match (rate, beta) {
                (_, Some(beta)) => RatePolicy::Dynamic { beta },
                (Some(rate), None) => RatePolicy::Fixed { rate },
                (None, None) => RatePolicy::Fixed {
                    rate: plan.rates.first().copied().unwrap_or(10.0),
                },
            };
            let spec = RunSpec::new(plan.seed, &prompt, policy, repeat);
            let evaluator = build_evaluator(&plan.eval)?;
            run_single(&plan, &spec, &bank, evaluator.as_ref())?;
            let dir = plan.output_dir.join("runs").join(&spec.run_id);
            let loaded = mutctl::experiment::read_run(&dir)?;
            let best = loaded
                .records
                .iter()
                .filter(|r| r.accepted)
                .filter_map(|r| r.score)
                .next_back()
                .unwrap_or(0.0);
            println!("{}: {} generations, best score {best}; logs in {}", spec.run_id, loaded.records.len(), dir.display());
        }
        Command::Adherence { common } => run_grid(&common, PlanKind::Adherence)?,
        Command::Dynamic { common } => run_grid(&common, PlanKind::Dynamic)?,
        Command::Report { runs, out, beta } => {
            let bundle = build_report(&output_root(&runs), beta)?;
            emit_reports(&bundle, &out)?;
            print_summary(&bundle, &out);
        }
        Command::GenPrompts { model, config, live } => {
            let cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let bank = match &cfg.prompts.file {
                Some(f) => mutctl::promptbank::PromptBank::load(f)?,
                None => builtin_bank(),
            };
            let meta = bank.first_of(PromptKind::Meta).context("prompt bank has no meta prompt")?;
            let text = render(meta, 10.0, &SourceText::default(), &model)?.text;
            if !live {
                println!("{text}");
                return Ok(());
            }
            let mut model_cfg = cfg.model.clone();
            model_cfg.model_name = model;
            let mut backend = LiveBackend::from_env(model_cfg)?;
            let ex = backend.complete(&ChatRequest {
                messages: vec![ChatMessage::user(text)],
                intent: RequestIntent::Other,
            })?;
            println!("{}", ex.response_text);
        }
        Command::CandidateEcho => {
            let stdin = io::stdin();
            let stdout = io::stdout();
            reference::serve(stdin.lock(), stdout.lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
