//! Library side of the `plancode` binary: dataset runs with persistence and
//! resume, and report generation from run records.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::Deserialize;
use thiserror::Error;

use plancode_core::agents::{Agents, TemplateSet};
use plancode_core::datasets::{extract_mbpp_sample_io, load_dataset, DatasetError, Format};
use plancode_core::domain::Problem;
use plancode_core::eval::{
    build_report, is_fresh, judge_hidden, read_records, Attempt, EvalError, Estimator, ProblemResult,
    Report, RunState, RunWriter,
};
use plancode_core::executor::{CodeExecutor, ComparePolicy, ExecLimits, ExecutorConfig, ProcessExecutor};
use plancode_core::llm::{
    BackendError, LiveConfig, LlmBackend, OpenAiBackend, RateLimited, ScriptedBackend,
};
use plancode_core::traversal::{SolveError, Solver};

pub use config::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Records(#[from] EvalError),
    #[error("problem {problem_id}: backend failed: {source}")]
    Backend {
        problem_id: String,
        source: BackendError,
    },
    #[error("writing run records: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Backend { .. } => EXIT_BACKEND,
            _ => EXIT_CONFIG,
        }
    }
}

/// Canned responses: one queue shared by all problems, or one per id.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Script {
    Shared(Vec<String>),
    PerProblem(BTreeMap<String, Vec<String>>),
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: not a response script: {e}", path.display())))
    }
}

/// Where each problem's model calls go.
pub enum Backends {
    Shared(Arc<dyn LlmBackend>),
    PerProblem(BTreeMap<String, Vec<String>>),
}

impl Backends {
    pub fn from_script(script: Script) -> Self {
        match script {
            Script::Shared(v) => Backends::Shared(Arc::new(ScriptedBackend::new(v))),
            Script::PerProblem(m) => Backends::PerProblem(m),
        }
    }

    fn for_problem(&self, id: &str) -> Arc<dyn LlmBackend> {
        match self {
            Backends::Shared(b) => b.clone(),
            Backends::PerProblem(m) => Arc::new(ScriptedBackend::new(
                m.get(id).cloned().unwrap_or_default(),
            )),
        }
    }

    fn is_shared_script(&self) -> bool {
        matches!(self, Backends::Shared(_))
    }
}

/// Scripted when `--script` is given, otherwise the live endpoint behind a
/// token bucket.
pub fn backends_for(settings: &Settings) -> Result<Backends, RunError> {
    if let Some(path) = &settings.script {
        return Ok(Backends::from_script(Script::load(path)?));
    }
    let mut live = LiveConfig::default();
    if let Some(m) = &settings.model {
        live.model_name = m.clone();
    }
    if let Some(u) = &settings.base_url {
        live.base_url = u.clone();
    }
    let client = OpenAiBackend::from_env(live).map_err(|e| RunError::Config(e.to_string()))?;
    let burst = settings.workers.max(1) as u32;
    Ok(Backends::Shared(Arc::new(RateLimited::new(client, settings.rpm, burst))))
}

pub fn load_problems(settings: &Settings) -> Result<Vec<Problem>, RunError> {
    let problems = load_dataset(&settings.dataset, settings.format)?;
    if settings.format != Format::MbppJsonl {
        return Ok(problems);
    }
    problems
        .iter()
        .map(|p| extract_mbpp_sample_io(p, settings.seed).map_err(RunError::from))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub problems: usize,
    pub skipped: usize,
    pub attempts_run: usize,
}

/// Solves every unfinished problem, judging each attempt on the hidden
/// tests and appending one record per problem. A backend failure stops
/// scheduling; records already written stay valid for `--resume`.
pub fn execute_run(
    settings: &Settings,
    backends: &Backends,
    executor: &dyn CodeExecutor,
) -> Result<RunSummary, RunError> {
    let problems = load_problems(settings)?;
    let templates = match &settings.templates {
        Some(dir) => TemplateSet::from_dir(dir).map_err(|e| RunError::Config(e.to_string()))?,
        None => TemplateSet::builtin(),
    };
    let agents = Agents::new(templates, settings.language.clone());
    let attempts = settings.attempts();

    let state = if settings.resume {
        RunState::resume(&settings.out)?
    } else if !is_fresh(&settings.out) {
        return Err(RunError::Config(format!(
            "{} already has records; pass --resume or choose another --out",
            settings.out.display()
        )));
    } else {
        RunState::default()
    };
    let todo: Vec<&Problem> = problems
        .iter()
        .filter(|p| !state.is_complete(&p.id, attempts))
        .collect();
    let skipped = problems.len() - todo.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} problem(s) already complete");
    }

    let workers = if backends.is_shared_script() && settings.workers > 1 {
        log::warn!("a shared response script is consumed in order; using one worker");
        1
    } else {
        settings.workers
    };
    let writer = Mutex::new(RunWriter::open(&settings.out)?);
    let limits = ExecLimits {
        per_test_timeout_ms: settings.run.per_test_timeout_ms,
        max_memory_mb: settings.memory_mb,
        ..ExecLimits::default()
    };
    let policy = ComparePolicy::default();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let ran = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<RunError>> = Mutex::new(None);

    thread::scope(|s| {
        for _ in 0..workers.min(todo.len()).max(1) {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(problem) = todo.get(i) else { return };
                let backend = backends.for_problem(&problem.id);
                let mut solver = Solver::new(&agents, backend.as_ref(), executor);
                solver.limits = limits;
                solver.policy = policy;
                let prior = state.results.get(&problem.id).cloned();
                match solve_problem(&solver, problem, prior, settings, attempts, &ran) {
                    Ok(result) => {
                        let solved = result.attempts.iter().filter(|a| a.solved_hidden).count();
                        if let Err(e) = writer.lock().unwrap().append(&result) {
                            abort.store(true, Ordering::SeqCst);
                            fatal.lock().unwrap().get_or_insert(RunError::Io(e));
                            return;
                        }
                        let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                        eprintln!(
                            "[{n}/{}] {}: {solved}/{} attempt(s) passed hidden tests",
                            todo.len(),
                            problem.id,
                            result.attempts.len()
                        );
                    }
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    Ok(RunSummary {
        problems: problems.len(),
        skipped,
        attempts_run: ran.into_inner(),
    })
}

fn solve_problem(
    solver: &Solver<'_>,
    problem: &Problem,
    prior: Option<ProblemResult>,
    settings: &Settings,
    attempts: usize,
    ran: &AtomicUsize,
) -> Result<ProblemResult, RunError> {
    let mut result = prior.unwrap_or_else(|| ProblemResult::new(problem));
    while result.attempts.len() < attempts {
        let mut attempt = Attempt {
            attempt_index: 0,
            solved_hidden: false,
            outcome: None,
            error: None,
            warnings: Vec::new(),
        };
        match solver.solve(problem, &settings.run) {
            Ok(outcome) => {
                match judge_hidden(&outcome, problem, solver.executor, &solver.limits, &solver.policy) {
                    Ok(j) => {
                        attempt.solved_hidden = j.passed;
                        attempt.warnings.extend(j.warning);
                    }
                    Err(e) => attempt.error = Some(format!("judge: {e}")),
                }
                attempt.outcome = Some(outcome);
            }
            Err(SolveError::Backend(source)) => {
                return Err(RunError::Backend {
                    problem_id: problem.id.clone(),
                    source,
                })
            }
            Err(e) => {
                log::warn!("{}: {} phase failed: {e}", problem.id, e.phase());
                attempt.error = Some(format!("{}: {e}", e.phase()));
            }
        }
        ran.fetch_add(1, Ordering::SeqCst);
        result.push(attempt);
    }
    Ok(result)
}

/// Default process executor sized to the worker count.
pub fn process_executor(settings: &Settings) -> ProcessExecutor {
    ProcessExecutor::new(ExecutorConfig {
        workers: settings.workers.max(1),
        ..ExecutorConfig::default()
    })
}

/// Builds the report for a record file; a missing file reports zero
/// problems.
pub fn report_from_file(path: &Path, ks: &[usize], estimator: Estimator) -> Result<Report, EvalError> {
    build_report(read_records(path)?, ks, estimator)
}
