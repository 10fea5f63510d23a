//! Confidence-ordered traversal over plans.
//!
//! Retrieval runs once and yields `k` exemplars; planning runs once per
//! exemplar; plans are tried from the most to the least confident. Each plan
//! is coded, tested on the sample I/O, and on failure debugged up to `t`
//! times, re-testing after every fix. The first candidate passing every
//! sample wins; if none does, the last candidate produced is returned.

use thiserror::Error;

use crate::agents::{AgentError, Agents, CallContext};
use crate::domain::{
    validate_problem, CandidateCode, PipelineMode, Plan, Problem, RunConfig, SolveOutcome,
    TraceEvent, TraversalTrace,
};
use crate::executor::{CodeExecutor, ComparePolicy, ExecError, ExecLimits};
use crate::llm::{BackendError, LlmBackend};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Every plan path failed to produce parseable output.
    #[error(transparent)]
    Agent(AgentError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("sample test execution failed: {0}")]
    Exec(#[from] ExecError),
}

impl SolveError {
    /// Short name of the stage that failed, for operator messages.
    pub fn phase(&self) -> &'static str {
        match self {
            SolveError::InvalidInput(_) => "validate",
            SolveError::Agent(_) => "agents",
            SolveError::Backend(_) => "backend",
            SolveError::Exec(_) => "execute",
        }
    }
}

/// Splits agent failures into the ones that end the run (backend) and the
/// ones that only end the current plan path.
fn classify(e: AgentError) -> Result<AgentError, SolveError> {
    match e {
        AgentError::Backend(b) => Err(SolveError::Backend(b)),
        AgentError::Template(_) => Err(SolveError::Agent(e)),
        other => Ok(other),
    }
}

/// Plans in descending confidence; equal confidences keep ascending
/// `origin_exemplar_index`. The input is left untouched.
pub fn sort_plans(plans: &[Plan]) -> Vec<Plan> {
    let mut out = plans.to_vec();
    out.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.origin_exemplar_index.cmp(&b.origin_exemplar_index))
    });
    out
}

/// Everything a solve needs besides the problem and the run config.
pub struct Solver<'a> {
    pub agents: &'a Agents,
    pub backend: &'a dyn LlmBackend,
    pub executor: &'a dyn CodeExecutor,
    /// Output and memory limits; the timeout comes from the run config.
    pub limits: ExecLimits,
    pub policy: ComparePolicy,
}

struct Walk<'s, 'a> {
    solver: &'s Solver<'a>,
    problem: &'s Problem,
    cx: CallContext<'a>,
    trace: TraversalTrace,
    limits: ExecLimits,
    plans_tried: usize,
    debug_iterations_used: usize,
    last_code: Option<CandidateCode>,
    last_error: Option<AgentError>,
}

enum PathResult {
    Solved(CandidateCode),
    Exhausted,
}

impl<'s, 'a> Walk<'s, 'a> {
    fn finish(self, code: CandidateCode, solved: bool) -> SolveOutcome {
        SolveOutcome {
            final_code: code,
            solved_on_samples: solved,
            plans_tried: self.plans_tried,
            debug_iterations_used: self.debug_iterations_used,
            usage: self.cx.usage(),
            transcript: self.cx.transcript,
            trace: self.trace,
        }
    }

    fn test(&mut self, index: usize, code: &CandidateCode) -> Result<crate::domain::TestReport, SolveError> {
        let report = self.solver.executor.run_candidate(
            code,
            &self.problem.sample_io,
            self.problem.exec_mode,
            self.problem.entry_point.as_deref(),
            &self.limits,
            &self.solver.policy,
        )?;
        self.trace.push(
            index,
            TraceEvent::Tested {
                all_passed: report.all_passed,
            },
        );
        Ok(report)
    }

    /// Code, test, and debug one plan.
    fn run_path(&mut self, index: usize, plan: Option<&Plan>, t: usize) -> Result<PathResult, SolveError> {
        self.plans_tried += 1;
        let agents = self.solver.agents;
        let mut code = match agents.run_coding(&mut self.cx, self.problem, plan) {
            Ok(c) => c,
            Err(e) => {
                self.last_error = Some(classify(e)?);
                return Ok(PathResult::Exhausted);
            }
        };
        self.trace.push(index, TraceEvent::Coded);
        self.last_code = Some(code.clone());
        if self.problem.sample_io.is_empty() {
            // nothing to test against: first code is final
            return Ok(PathResult::Solved(code));
        }
        let mut report = self.test(index, &code)?;
        if report.all_passed {
            return Ok(PathResult::Solved(code));
        }
        for iteration in 1..=t {
            code = match agents.run_debugging(&mut self.cx, self.problem, plan, &code, &report, iteration, t) {
                Ok(c) => c,
                Err(e) => {
                    self.last_error = Some(classify(e)?);
                    return Ok(PathResult::Exhausted);
                }
            };
            self.debug_iterations_used += 1;
            self.trace.push(
                index,
                TraceEvent::Debugged {
                    iteration: iteration as u32,
                },
            );
            self.last_code = Some(code.clone());
            report = self.test(index, &code)?;
            if report.all_passed {
                return Ok(PathResult::Solved(code));
            }
        }
        Ok(PathResult::Exhausted)
    }
}

impl<'a> Solver<'a> {
    pub fn new(agents: &'a Agents, backend: &'a dyn LlmBackend, executor: &'a dyn CodeExecutor) -> Self {
        Solver {
            agents,
            backend,
            executor,
            limits: ExecLimits::default(),
            policy: ComparePolicy::default(),
        }
    }

    pub fn solve(&self, problem: &Problem, cfg: &RunConfig) -> Result<SolveOutcome, SolveError> {
        cfg.validate().map_err(SolveError::InvalidInput)?;
        let violations = validate_problem(problem);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(SolveError::InvalidInput(format!(
                "problem {}: {}",
                problem.id,
                list.join("; ")
            )));
        }
        let mut walk = Walk {
            solver: self,
            problem,
            cx: CallContext::new(self.backend, cfg.temperature),
            trace: TraversalTrace::default(),
            limits: ExecLimits {
                per_test_timeout_ms: cfg.per_test_timeout_ms,
                ..self.limits
            },
            plans_tried: 0,
            debug_iterations_used: 0,
            last_code: None,
            last_error: None,
        };

        if cfg.mode == PipelineMode::Direct {
            let code = self
                .agents
                .run_direct(&mut walk.cx, problem)
                .map_err(|e| classify(e).map_or_else(|fatal| fatal, SolveError::Agent))?;
            return Ok(walk.finish(code, false));
        }

        let k = cfg.k;
        let t = cfg.effective_t();
        let toggles = cfg.agent_toggles;

        let plans: Vec<Option<Plan>> = if toggles.planning {
            let exemplars = if toggles.retrieval {
                self.agents
                    .run_retrieval(&mut walk.cx, problem, k)
                    .map_err(|e| classify(e).map_or_else(|fatal| fatal, SolveError::Agent))?
                    .into_iter()
                    .map(Some)
                    .collect()
            } else {
                vec![None; k]
            };
            let mut plans = Vec::with_capacity(k);
            for (i, ex) in exemplars.iter().enumerate() {
                match self.agents.run_planning(&mut walk.cx, problem, ex.as_ref(), i) {
                    Ok(p) => plans.push(p),
                    Err(e) => walk.last_error = Some(classify(e)?),
                }
            }
            if plans.is_empty() {
                return Err(SolveError::Agent(walk.last_error.take().expect("k >= 1")));
            }
            sort_plans(&plans).into_iter().map(Some).collect()
        } else {
            vec![None; k]
        };

        walk.trace.ordered_plan_indices = plans
            .iter()
            .enumerate()
            .map(|(i, p)| p.as_ref().map_or(i, |p| p.origin_exemplar_index))
            .collect();

        for (pos, plan) in plans.iter().enumerate() {
            let index = walk.trace.ordered_plan_indices[pos];
            if let PathResult::Solved(code) = walk.run_path(index, plan.as_ref(), t)? {
                let tested = !problem.sample_io.is_empty();
                return Ok(walk.finish(code, tested));
            }
        }
        match walk.last_code.take() {
            Some(code) => Ok(walk.finish(code, false)),
            None => Err(SolveError::Agent(
                walk.last_error.take().expect("a failed path records its error"),
            )),
        }
    }
}

/// Solves with the builtin templates, python as the solution language and
/// default output limits and compare policy.
pub fn solve(
    problem: &Problem,
    cfg: &RunConfig,
    backend: &dyn LlmBackend,
    executor: &dyn CodeExecutor,
) -> Result<SolveOutcome, SolveError> {
    let agents = Agents::default();
    Solver::new(&agents, backend, executor).solve(problem, cfg)
}

#[cfg(test)]
mod tests;
