//! Ask/tell protocol over a candidate process's stdin/stdout.
//!
//! One JSON object per `\n`-terminated line:
//!
//! ```text
//! harness   -> candidate  {"type":"init","dim":D,"budget":B,"lower":-5.0,"upper":5.0,"seed":S}
//! candidate -> harness    {"type":"ask","x":[...]}
//! harness   -> candidate  {"type":"tell","y":Y,"evals_left":N}
//! harness   -> candidate  {"type":"stop"}            (budget exhausted)
//! candidate -> harness    {"type":"done"}            (optional early end)
//! candidate -> harness    {"type":"error","message":"..."}
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BudgetedRun, Problem, LOWER, UPPER};
use crate::metrics::AoccBounds;

/// Grace period for a candidate to exit after `stop` or `done`.
pub const EXIT_GRACE: Duration = Duration::from_secs(5);
const STDERR_TAIL: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HarnessMessage {
    Init {
        dim: usize,
        budget: usize,
        lower: f64,
        upper: f64,
        seed: u64,
    },
    Tell {
        y: f64,
        evals_left: usize,
    },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CandidateMessage {
    Ask { x: Vec<f64> },
    Done,
    Error { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Spawn,
    Protocol,
    Timeout,
    Crashed,
    CandidateError,
    NoEvaluations,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Spawn => "spawn",
            FailureKind::Protocol => "protocol",
            FailureKind::Timeout => "timeout",
            FailureKind::Crashed => "crashed",
            FailureKind::CandidateError => "candidate_error",
            FailureKind::NoEvaluations => "no_evaluations",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    Failed(RunFailure),
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunOutcome::Completed)
    }
}

/// Result of driving one candidate process.
#[derive(Debug, Clone)]
pub struct CandidateRun {
    pub run: BudgetedRun,
    pub outcome: RunOutcome,
    pub stderr_tail: String,
    /// Candidate ignored `stop`/`done` and had to be killed.
    pub killed_after_end: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl CandidateCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for CandidateCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

enum Step {
    Continue,
    Finished,
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: mpsc::Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<VecDeque<u8>>>,
    deadline: Instant,
}

impl Session {
    /// A failed write means the candidate is gone; the exit status then
    /// decides the outcome.
    fn send(&mut self, msg: &HarnessMessage) -> Result<(), Ended> {
        let mut line = serde_json::to_string(msg).expect("harness messages serialize");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or(Ended::Eof)?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|_| Ended::Eof)
    }

    fn stderr_tail(&self) -> String {
        let buf = self.stderr.lock().expect("stderr lock");
        let bytes: Vec<u8> = buf.iter().copied().collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    /// Closes stdin and waits up to `grace` for exit; returns `(status, killed)`.
    fn finish(&mut self, grace: Duration) -> (Option<ExitStatus>, bool) {
        self.stdin.take();
        let until = Instant::now() + grace;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return (Some(status), false),
                Ok(None) if Instant::now() < until => thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = self.child.kill();
                    let status = self.child.wait().ok();
                    return (status, true);
                }
            }
        }
    }

    fn abort(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn protocol_failure(message: impl Into<String>) -> RunFailure {
    RunFailure {
        kind: FailureKind::Protocol,
        message: message.into(),
    }
}

/// Launches `command`, drives the ask/tell exchange on `problem` until the
/// budget is spent, the candidate ends, or `timeout` elapses.
pub fn run_candidate(
    command: &CandidateCommand,
    problem: &Problem,
    budget: usize,
    seed: u64,
    bounds: AoccBounds,
    timeout: Duration,
) -> CandidateRun {
    let mut run = BudgetedRun::new(problem.clone(), budget, bounds);
    let spawned = Command::new(&command.program)
        .args(&command.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => {
            return CandidateRun {
                run,
                outcome: RunOutcome::Failed(RunFailure {
                    kind: FailureKind::Spawn,
                    message: format!("cannot launch `{command}`: {e}"),
                }),
                stderr_tail: String::new(),
                killed_after_end: false,
            }
        }
    };

    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let stderr_buf = Arc::new(Mutex::new(VecDeque::with_capacity(STDERR_TAIL)));
    let (stderr_done_tx, stderr_done) = mpsc::channel::<()>();
    if let Some(mut stderr) = child.stderr.take() {
        let sink = Arc::clone(&stderr_buf);
        thread::spawn(move || {
            let _done = stderr_done_tx;
            let mut chunk = [0u8; 1024];
            while let Ok(n) = stderr.read(&mut chunk) {
                if n == 0 {
                    break;
                }
                let mut buf = sink.lock().expect("stderr lock");
                buf.extend(&chunk[..n]);
                while buf.len() > STDERR_TAIL {
                    buf.pop_front();
                }
            }
        });
    }

    let mut session = Session {
        stdin: child.stdin.take(),
        child,
        lines: rx,
        stderr: stderr_buf,
        deadline: Instant::now() + timeout,
    };

    let result = drive(&mut session, &mut run, seed);
    let (outcome, killed) = match result {
        Ok(()) => {
            let (_, killed) = session.finish(EXIT_GRACE);
            (RunOutcome::Completed, killed)
        }
        Err(Ended::Eof) => {
            let (status, killed) = session.finish(EXIT_GRACE);
            let clean = status.map(|s| s.success()).unwrap_or(false);
            let outcome = if !clean {
                RunOutcome::Failed(RunFailure {
                    kind: FailureKind::Crashed,
                    message: match status {
                        Some(s) => format!("candidate exited with {s} before finishing"),
                        None => "candidate exited abnormally".into(),
                    },
                })
            } else if run.evals_used() == 0 {
                RunOutcome::Failed(RunFailure {
                    kind: FailureKind::NoEvaluations,
                    message: "candidate exited without evaluating any point".into(),
                })
            } else {
                RunOutcome::Completed
            };
            (outcome, killed)
        }
        Err(Ended::Failure(f)) => {
            session.abort();
            (RunOutcome::Failed(f), false)
        }
    };
    // stderr closes when the process exits, unless a grandchild still holds it
    let _ = stderr_done.recv_timeout(Duration::from_millis(200));
    CandidateRun {
        stderr_tail: session.stderr_tail(),
        run,
        outcome,
        killed_after_end: killed,
    }
}

enum Ended {
    Eof,
    Failure(RunFailure),
}

impl From<RunFailure> for Ended {
    fn from(f: RunFailure) -> Self {
        Ended::Failure(f)
    }
}

fn drive(session: &mut Session, run: &mut BudgetedRun, seed: u64) -> Result<(), Ended> {
    session.send(&HarnessMessage::Init {
        dim: run.problem().dim(),
        budget: run.budget(),
        lower: LOWER,
        upper: UPPER,
        seed,
    })?;
    if run.budget() == 0 {
        let _ = session.send(&HarnessMessage::Stop);
        return Ok(());
    }
    loop {
        let now = Instant::now();
        let wait = session.deadline.saturating_duration_since(now);
        let line = match session.lines.recv_timeout(wait) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(protocol_failure(format!("unreadable output: {e}")).into()),
            Err(RecvTimeoutError::Timeout) => {
                return Err(RunFailure {
                    kind: FailureKind::Timeout,
                    message: format!("wall-clock timeout after {} evaluations", run.evals_used()),
                }
                .into())
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Ended::Eof),
        };
        if line.trim().is_empty() {
            continue;
        }
        let msg: CandidateMessage = serde_json::from_str(&line)
            .map_err(|e| protocol_failure(format!("malformed message {:?}: {e}", clip(&line))))?;
        match step(session, run, msg)? {
            Step::Continue => {}
            Step::Finished => return Ok(()),
        }
    }
}

fn step(session: &mut Session, run: &mut BudgetedRun, msg: CandidateMessage) -> Result<Step, Ended> {
    match msg {
        CandidateMessage::Ask { x } => {
            let y = run
                .evaluate(&x)
                .map_err(|e| protocol_failure(format!("rejected ask: {e}")))?;
            let y = if y.is_finite() { y } else { f64::MAX };
            session.send(&HarnessMessage::Tell {
                y,
                evals_left: run.evals_left(),
            })?;
            if run.evals_left() == 0 {
                // the candidate may already have exited on evals_left == 0
                let _ = session.send(&HarnessMessage::Stop);
                return Ok(Step::Finished);
            }
            Ok(Step::Continue)
        }
        CandidateMessage::Done => Ok(Step::Finished),
        CandidateMessage::Error { message } => Err(RunFailure {
            kind: FailureKind::CandidateError,
            message,
        }
        .into()),
    }
}

fn clip(s: &str) -> String {
    s.chars().take(120).collect()
}
