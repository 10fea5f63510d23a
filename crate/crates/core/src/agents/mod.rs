//! The four pipeline agents (retrieval, planning, coding, debugging) plus the
//! direct-prompting baseline. Each agent renders a template, makes one
//! backend call and parses the structured answer; a response that fails to
//! parse is re-asked exactly once with a format reminder.

pub mod tagged;
pub mod template;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::domain::{
    AgentCall, AgentKind, CandidateCode, ExecMode, Exemplar, Plan, Problem, Producer,
    TestKind, TestReport, UsageTotals,
};
use crate::llm::{BackendError, CompletionRequest, LlmBackend};

pub use tagged::{
    parse_tagged, Cardinality, ParseError, TagValue, TaggedResponseSchema, TaggedValues,
    ValueKind,
};
pub use template::{render_prompt, PromptTemplate, TemplateError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{agent} response could not be parsed: {source}")]
    Parse {
        agent: AgentKind,
        #[source]
        source: ParseError,
    },
    #[error("{agent} precondition violated: {message}")]
    Precondition { agent: AgentKind, message: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl AgentError {
    fn precondition(agent: AgentKind, message: impl Into<String>) -> Self {
        AgentError::Precondition {
            agent,
            message: message.into(),
        }
    }
}

const RETRIEVAL_SLOTS: &[&str] = &["problem", "k", "language"];
const PLANNING_SLOTS: &[&str] = &["exemplar", "algorithm", "problem", "sample_io"];
const CODING_SLOTS: &[&str] = &["language", "problem", "plan", "sample_io", "io_instructions"];
const DEBUGGING_SLOTS: &[&str] = &[
    "language",
    "problem",
    "plan",
    "code",
    "failures",
    "io_instructions",
];
const DIRECT_SLOTS: &[&str] = &["language", "problem", "io_instructions"];

const TEMPLATE_FILES: [(&str, &[&str], &str); 5] = [
    ("retrieval", RETRIEVAL_SLOTS, include_str!("../../templates/retrieval.txt")),
    ("planning", PLANNING_SLOTS, include_str!("../../templates/planning.txt")),
    ("coding", CODING_SLOTS, include_str!("../../templates/coding.txt")),
    ("debugging", DEBUGGING_SLOTS, include_str!("../../templates/debugging.txt")),
    ("direct", DIRECT_SLOTS, include_str!("../../templates/direct.txt")),
];

/// The five prompt templates, each checked against the slots its agent
/// binds.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub retrieval: PromptTemplate,
    pub planning: PromptTemplate,
    pub coding: PromptTemplate,
    pub debugging: PromptTemplate,
    pub direct: PromptTemplate,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::build(|name, slots, text| PromptTemplate::with_slots(name, text, slots))
            .expect("builtin templates are well-formed")
    }

    /// Loads `<dir>/<name>.txt` for every template name; files that do not
    /// exist fall back to the builtin text.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        Self::build(|name, slots, text| {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                PromptTemplate::load(name, &path, slots)
            } else {
                PromptTemplate::with_slots(name, text, slots)
            }
        })
    }

    fn build(
        mut f: impl FnMut(&str, &[&str], &str) -> Result<PromptTemplate, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let mut it = TEMPLATE_FILES.iter().map(|(n, s, t)| f(n, s, t));
        Ok(TemplateSet {
            retrieval: it.next().unwrap()?,
            planning: it.next().unwrap()?,
            coding: it.next().unwrap()?,
            debugging: it.next().unwrap()?,
            direct: it.next().unwrap()?,
        })
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Backend handle plus the transcript of one solve.
pub struct CallContext<'a> {
    backend: &'a dyn LlmBackend,
    pub temperature: f64,
    pub transcript: Vec<AgentCall>,
}

impl<'a> CallContext<'a> {
    pub fn new(backend: &'a dyn LlmBackend, temperature: f64) -> Self {
        CallContext {
            backend,
            temperature,
            transcript: Vec::new(),
        }
    }

    pub fn calls_to(&self, agent: AgentKind) -> usize {
        self.transcript.iter().filter(|c| c.agent == agent).count()
    }

    pub fn usage(&self) -> UsageTotals {
        UsageTotals::from_calls(&self.transcript)
    }

    fn call(
        &mut self,
        agent: AgentKind,
        prompt: String,
        parse_retry: bool,
    ) -> Result<String, BackendError> {
        let req = CompletionRequest::new(prompt, self.temperature);
        let res = self.backend.complete(&req)?;
        self.transcript.push(AgentCall {
            agent,
            prompt: req.user_text,
            response: res.text.clone(),
            latency_ms: res.latency_ms,
            tokens_in: res.tokens_in,
            tokens_out: res.tokens_out,
            tokens_estimated: res.tokens_estimated,
            parse_retry,
        });
        Ok(res.text)
    }

    /// One call, and on a parse failure one re-ask with a format reminder.
    fn call_parsed<T>(
        &mut self,
        agent: AgentKind,
        prompt: String,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, AgentError> {
        let first = self.call(agent, prompt.clone(), false)?;
        let err = match parse(&first) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        log::debug!("{agent} response unparseable ({err}); re-asking once");
        let second = self.call(agent, format_reminder(&prompt, &err), true)?;
        parse(&second).map_err(|source| AgentError::Parse { agent, source })
    }
}

fn format_reminder(prompt: &str, err: &ParseError) -> String {
    format!(
        "{prompt}\n\nYour previous response could not be used ({err}). \
         Answer again and follow the required response format exactly."
    )
}

/// Renders sample tests for a prompt.
pub fn render_sample_io(problem: &Problem) -> String {
    if problem.sample_io.is_empty() {
        return "No sample test cases are provided.".into();
    }
    problem
        .sample_io
        .iter()
        .map(|t| match &t.kind {
            TestKind::Assertion { text } => text.trim().to_string(),
            TestKind::IoPair {
                input,
                expected_output,
            } => format!(
                "Input:\n{}\nExpected output:\n{}",
                input.trim_end(),
                expected_output.trim_end()
            ),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn io_instructions(problem: &Problem) -> String {
    match problem.exec_mode {
        ExecMode::StdinStdout => "Your program must read its input from standard input and \
             write its output to standard output. Do not print anything else."
            .to_string(),
        ExecMode::FunctionCall => format!(
            "Implement the function `{}` with the given signature. Do not include example \
             usage or test code.",
            problem.entry_point.as_deref().unwrap_or("")
        ),
    }
}

/// Renders the sole failure detail section of a debugging prompt. Every
/// non-passing verdict appears with its detail verbatim.
pub fn render_failures(report: &TestReport) -> String {
    report
        .failures()
        .map(|v| format!("### Test {}: {}\n{}", v.label, v.verdict, v.detail))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_exemplar(ex: &Exemplar) -> String {
    let steps = ex
        .plan
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n");
    format!("{}\n\n## Plan:\n{}", ex.description.trim(), steps)
}

fn render_algorithm(ex: &Exemplar) -> String {
    let mut s = ex.algorithm.trim().to_string();
    if !ex.tutorial.trim().is_empty() {
        s.push_str("\n\n");
        s.push_str(ex.tutorial.trim());
    }
    s
}

const NO_EXEMPLAR: &str = "No example problem is available.";
const NO_ALGORITHM: &str = "Not identified.";
const NO_PLAN: &str = "No plan is available; solve the problem directly.";

fn bindings<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

fn retrieval_schema(k: usize) -> TaggedResponseSchema {
    TaggedResponseSchema::new()
        .tag("problem", Cardinality::Exactly(k), ValueKind::Text)
        .tag("algorithm", Cardinality::One, ValueKind::Text)
        .tag("tutorial", Cardinality::One, ValueKind::Text)
}

fn exemplar_schema() -> TaggedResponseSchema {
    TaggedResponseSchema::new()
        .tag("description", Cardinality::One, ValueKind::Text)
        .tag("code", Cardinality::One, ValueKind::CodeBlock)
}

fn planning_schema() -> TaggedResponseSchema {
    TaggedResponseSchema::new()
        .tag("plan", Cardinality::One, ValueKind::Text)
        .tag("confidence", Cardinality::One, ValueKind::Number)
}

/// Parses a retrieval response holding exactly `k` `<problem>` blocks.
///
/// Each block's plan comes from the numbered step comments of its code;
/// when the code carries none, the block's optional `<planning>` list is
/// used instead. The shared `<algorithm>` and `<tutorial>` are copied into
/// every exemplar.
pub fn parse_retrieval(text: &str, k: usize) -> Result<Vec<Exemplar>, ParseError> {
    let top = parse_tagged(text, &retrieval_schema(k))?;
    let algorithm = top["algorithm"][0].as_text().to_string();
    let tutorial = top["tutorial"][0].as_text().to_string();
    top["problem"]
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let inner = parse_tagged(block.as_text(), &exemplar_schema())?;
            let code = inner["code"][0].as_text().to_string();
            let mut plan = tagged::steps_from_code(&code);
            if plan.is_empty() {
                if let Some(p) = tagged::tag_regions(block.as_text(), "planning").first() {
                    plan = tagged::steps_from_list(p);
                }
            }
            let ex = Exemplar {
                description: inner["description"][0].as_text().to_string(),
                code,
                plan,
                algorithm: algorithm.clone(),
                tutorial: tutorial.clone(),
            };
            if ex.is_valid() {
                Ok(ex)
            } else {
                Err(ParseError::Malformed(format!(
                    "exemplar {} has no code or no numbered steps",
                    i + 1
                )))
            }
        })
        .collect()
}

pub fn parse_planning(text: &str, origin_exemplar_index: usize) -> Result<Plan, ParseError> {
    let v = parse_tagged(text, &planning_schema())?;
    let steps = tagged::steps_from_list(v["plan"][0].as_text());
    if steps.is_empty() {
        return Err(ParseError::Malformed("plan section is empty".into()));
    }
    let confidence = v["confidence"][0].as_number().unwrap_or_default();
    Ok(Plan::new(steps, confidence, origin_exemplar_index))
}

/// Prompt construction and response parsing for every agent. Stateless
/// apart from the templates, so one instance serves concurrent solves.
#[derive(Debug, Clone)]
pub struct Agents {
    pub templates: TemplateSet,
    /// Solution language named in prompts and attached to candidates.
    pub language: String,
}

impl Default for Agents {
    fn default() -> Self {
        Agents {
            templates: TemplateSet::builtin(),
            language: "python".into(),
        }
    }
}

impl Agents {
    pub fn new(templates: TemplateSet, language: impl Into<String>) -> Self {
        Agents {
            templates,
            language: language.into(),
        }
    }

    pub fn retrieval_prompt(&self, problem: &Problem, k: usize) -> Result<String, AgentError> {
        Ok(render_prompt(
            &self.templates.retrieval,
            &bindings([
                ("problem", problem.description.trim().to_string()),
                ("k", k.to_string()),
                ("language", self.language.clone()),
            ]),
        )?)
    }

    /// Self-retrieves `k` exemplars with a single call.
    pub fn run_retrieval(
        &self,
        cx: &mut CallContext<'_>,
        problem: &Problem,
        k: usize,
    ) -> Result<Vec<Exemplar>, AgentError> {
        if k == 0 {
            return Err(AgentError::precondition(AgentKind::Retrieval, "k must be at least 1"));
        }
        let prompt = self.retrieval_prompt(problem, k)?;
        cx.call_parsed(AgentKind::Retrieval, prompt, |r| parse_retrieval(r, k))
    }

    /// The problem is placed after the exemplar in the prompt.
    pub fn planning_prompt(
        &self,
        problem: &Problem,
        exemplar: Option<&Exemplar>,
    ) -> Result<String, AgentError> {
        let (ex, algo) = match exemplar {
            Some(e) => (render_exemplar(e), render_algorithm(e)),
            None => (NO_EXEMPLAR.to_string(), NO_ALGORITHM.to_string()),
        };
        Ok(render_prompt(
            &self.templates.planning,
            &bindings([
                ("exemplar", ex),
                ("algorithm", algo),
                ("problem", problem.description.trim().to_string()),
                ("sample_io", render_sample_io(problem)),
            ]),
        )?)
    }

    /// One plan with its confidence for one exemplar (or none, when
    /// retrieval is disabled).
    pub fn run_planning(
        &self,
        cx: &mut CallContext<'_>,
        problem: &Problem,
        exemplar: Option<&Exemplar>,
        origin_exemplar_index: usize,
    ) -> Result<Plan, AgentError> {
        if let Some(e) = exemplar {
            if !e.is_valid() {
                return Err(AgentError::precondition(
                    AgentKind::Planning,
                    "exemplar has no code or no plan",
                ));
            }
        }
        let prompt = self.planning_prompt(problem, exemplar)?;
        cx.call_parsed(AgentKind::Planning, prompt, |r| {
            parse_planning(r, origin_exemplar_index)
        })
    }

    pub fn coding_prompt(&self, problem: &Problem, plan: Option<&Plan>) -> Result<String, AgentError> {
        Ok(render_prompt(
            &self.templates.coding,
            &bindings([
                ("language", self.language.clone()),
                ("problem", problem.description.trim().to_string()),
                ("plan", plan.map_or_else(|| NO_PLAN.to_string(), Plan::render)),
                ("sample_io", render_sample_io(problem)),
                ("io_instructions", io_instructions(problem)),
            ]),
        )?)
    }

    fn candidate(&self, source: String, produced_by: Producer) -> Result<CandidateCode, ParseError> {
        CandidateCode::new(source, self.language.clone(), produced_by).ok_or(ParseError::NoCodeBlock)
    }

    /// Translates a plan into code; the last fenced block of the response
    /// is the candidate.
    pub fn run_coding(
        &self,
        cx: &mut CallContext<'_>,
        problem: &Problem,
        plan: Option<&Plan>,
    ) -> Result<CandidateCode, AgentError> {
        let prompt = self.coding_prompt(problem, plan)?;
        cx.call_parsed(AgentKind::Coding, prompt, |r| {
            self.candidate(tagged::last_code_block(r)?, Producer::Coding)
        })
    }

    pub fn debugging_prompt(
        &self,
        problem: &Problem,
        plan: Option<&Plan>,
        code: &CandidateCode,
        report: &TestReport,
    ) -> Result<String, AgentError> {
        Ok(render_prompt(
            &self.templates.debugging,
            &bindings([
                ("language", self.language.clone()),
                ("problem", problem.description.trim().to_string()),
                ("plan", plan.map_or_else(|| NO_PLAN.to_string(), Plan::render)),
                ("code", format!("```{}\n{}\n```", self.language, code.source.trim_end())),
                ("failures", render_failures(report)),
                ("io_instructions", io_instructions(problem)),
            ]),
        )?)
    }

    /// Repairs `code` from a failing sample-test report. `iteration` is
    /// 1-based and at most `max_iterations`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_debugging(
        &self,
        cx: &mut CallContext<'_>,
        problem: &Problem,
        plan: Option<&Plan>,
        code: &CandidateCode,
        report: &TestReport,
        iteration: usize,
        max_iterations: usize,
    ) -> Result<CandidateCode, AgentError> {
        if report.all_passed {
            return Err(AgentError::precondition(
                AgentKind::Debugging,
                "report has no failing test",
            ));
        }
        if iteration == 0 || iteration > max_iterations {
            return Err(AgentError::precondition(
                AgentKind::Debugging,
                format!("iteration {iteration} outside 1..={max_iterations}"),
            ));
        }
        let prompt = self.debugging_prompt(problem, plan, code, report)?;
        let producer = Producer::Debugging(iteration as u32);
        cx.call_parsed(AgentKind::Debugging, prompt, |r| {
            self.candidate(tagged::last_code_block(r)?, producer)
        })
    }

    pub fn direct_prompt(&self, problem: &Problem) -> Result<String, AgentError> {
        Ok(render_prompt(
            &self.templates.direct,
            &bindings([
                ("language", self.language.clone()),
                ("problem", problem.description.trim().to_string()),
                ("io_instructions", io_instructions(problem)),
            ]),
        )?)
    }

    /// Zero-shot baseline: one call, recorded as a coding call.
    pub fn run_direct(
        &self,
        cx: &mut CallContext<'_>,
        problem: &Problem,
    ) -> Result<CandidateCode, AgentError> {
        let prompt = self.direct_prompt(problem)?;
        cx.call_parsed(AgentKind::Coding, prompt, |r| {
            self.candidate(tagged::last_code_block(r)?, Producer::Coding)
        })
    }
}
