//! Shared domain types for problems, plans, candidates and run accounting.
//!
//! Everything here is plain data: no I/O, no prompts. Types that have an
//! external representation derive serde and round-trip through JSON.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound of the plan confidence scale. Model outputs are clamped into
/// `[0, MAX_CONFIDENCE]`.
pub const MAX_CONFIDENCE: f64 = 100.0;

/// How candidate code is exercised by a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Candidate defines a function; tests are assertion snippets.
    FunctionCall,
    /// Candidate is a program reading stdin and writing stdout.
    StdinStdout,
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecMode::FunctionCall => f.write_str("function_call"),
            ExecMode::StdinStdout => f.write_str("stdin_stdout"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    Assertion { text: String },
    IoPair { input: String, expected_output: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    #[serde(flatten)]
    pub kind: TestKind,
    pub label: String,
}

impl TestCase {
    pub fn assertion(label: impl Into<String>, text: impl Into<String>) -> Self {
        TestCase {
            kind: TestKind::Assertion { text: text.into() },
            label: label.into(),
        }
    }

    pub fn io_pair(
        label: impl Into<String>,
        input: impl Into<String>,
        expected_output: impl Into<String>,
    ) -> Self {
        TestCase {
            kind: TestKind::IoPair {
                input: input.into(),
                expected_output: expected_output.into(),
            },
            label: label.into(),
        }
    }

    /// The execution mode this test can run under.
    pub fn required_mode(&self) -> ExecMode {
        match self.kind {
            TestKind::Assertion { .. } => ExecMode::FunctionCall,
            TestKind::IoPair { .. } => ExecMode::StdinStdout,
        }
    }

    /// Whitespace-normalized content key, ignoring the label. Two tests with
    /// equal keys are considered the same test for disjointness checks.
    pub fn content_key(&self) -> String {
        match &self.kind {
            TestKind::Assertion { text } => format!("A|{}", normalize_ws(text)),
            TestKind::IoPair {
                input,
                expected_output,
            } => format!(
                "IO|{}|{}",
                normalize_ws(input),
                normalize_ws(expected_output)
            ),
        }
    }

    /// Returns a description of the violated invariant, if any.
    pub fn check(&self) -> Option<&'static str> {
        match &self.kind {
            TestKind::Assertion { text } if text.trim().is_empty() => {
                Some("assertion text is empty")
            }
            TestKind::IoPair {
                input,
                expected_output,
            } if input.trim().is_empty() && expected_output.trim().is_empty() => {
                Some("io pair has neither input nor expected output")
            }
            _ => None,
        }
    }
}

/// Collapses every run of whitespace to a single space and trims the ends.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub description: String,
    pub exec_mode: ExecMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
    #[serde(default)]
    pub sample_io: Vec<TestCase>,
    #[serde(default)]
    pub hidden_tests: Vec<TestCase>,
    #[serde(default)]
    pub source_dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty_tag: Option<String>,
}

/// A single broken invariant reported by [`validate_problem`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    EmptyId,
    MissingEntryPoint,
    UnexpectedEntryPoint,
    /// A sample test has the same normalized content as a hidden test.
    Overlap { sample: String, hidden: String },
    InvalidTest { label: String, reason: String },
    /// Test kind does not match the problem's execution mode.
    ModeMismatch { label: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => f.write_str("empty id"),
            Violation::MissingEntryPoint => f.write_str("missing-entry-point"),
            Violation::UnexpectedEntryPoint => {
                f.write_str("entry point given for a stdin/stdout problem")
            }
            Violation::Overlap { sample, hidden } => {
                write!(f, "overlap: sample {sample} duplicates hidden {hidden}")
            }
            Violation::InvalidTest { label, reason } => write!(f, "test {label}: {reason}"),
            Violation::ModeMismatch { label } => {
                write!(f, "test {label} does not match the problem's exec mode")
            }
        }
    }
}

/// Lists every invariant violation of `p`. An empty list means the problem
/// is valid. Id uniqueness is a dataset-level property and is checked by the
/// loader instead.
pub fn validate_problem(p: &Problem) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    let has_entry = p
        .entry_point
        .as_deref()
        .is_some_and(|e| !e.trim().is_empty());
    match p.exec_mode {
        ExecMode::FunctionCall if !has_entry => out.push(Violation::MissingEntryPoint),
        ExecMode::StdinStdout if p.entry_point.is_some() => {
            out.push(Violation::UnexpectedEntryPoint)
        }
        _ => {}
    }
    for t in p.sample_io.iter().chain(&p.hidden_tests) {
        if let Some(reason) = t.check() {
            out.push(Violation::InvalidTest {
                label: t.label.clone(),
                reason: reason.to_string(),
            });
        }
        if t.required_mode() != p.exec_mode {
            out.push(Violation::ModeMismatch {
                label: t.label.clone(),
            });
        }
    }
    for s in &p.sample_io {
        let key = s.content_key();
        if let Some(h) = p.hidden_tests.iter().find(|h| h.content_key() == key) {
            out.push(Violation::Overlap {
                sample: s.label.clone(),
                hidden: h.label.clone(),
            });
        }
    }
    out
}

/// A self-recalled related problem with its solution and derived plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub description: String,
    pub code: String,
    pub plan: Vec<String>,
    pub algorithm: String,
    pub tutorial: String,
}

impl Exemplar {
    pub fn is_valid(&self) -> bool {
        !self.plan.is_empty() && !self.code.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<String>,
    pub confidence: f64,
    pub origin_exemplar_index: usize,
}

impl Plan {
    /// Builds a plan, clamping `confidence` into `[0, 100]`.
    pub fn new(steps: Vec<String>, confidence: f64, origin_exemplar_index: usize) -> Self {
        Plan {
            steps,
            confidence: clamp_confidence(confidence),
            origin_exemplar_index,
        }
    }

    /// Steps rendered as a numbered list.
    pub fn render(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn clamp_confidence(c: f64) -> f64 {
    if c.is_nan() {
        0.0
    } else {
        c.clamp(0.0, MAX_CONFIDENCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "agent", content = "iteration", rename_all = "snake_case")]
pub enum Producer {
    Coding,
    Debugging(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCode {
    pub source: String,
    pub language_tag: String,
    pub produced_by: Producer,
}

impl CandidateCode {
    /// Returns `None` when `source` is blank.
    pub fn new(
        source: impl Into<String>,
        language_tag: impl Into<String>,
        produced_by: Producer,
    ) -> Option<Self> {
        let source = source.into();
        if source.trim().is_empty() {
            return None;
        }
        Some(CandidateCode {
            source,
            language_tag: language_tag.into(),
            produced_by,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    WrongOutput,
    RuntimeError,
    Timeout,
    HarnessError,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Pass => "Pass",
            Verdict::WrongOutput => "WrongOutput",
            Verdict::RuntimeError => "RuntimeError",
            Verdict::Timeout => "Timeout",
            Verdict::HarnessError => "HarnessError",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub label: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub verdicts: Vec<TestVerdict>,
    pub all_passed: bool,
    pub wall_time_ms: u64,
}

impl TestReport {
    /// `all_passed` is derived from the verdicts, never supplied.
    pub fn new(verdicts: Vec<TestVerdict>, wall_time_ms: u64) -> Self {
        let all_passed = verdicts.iter().all(|v| v.verdict == Verdict::Pass);
        TestReport {
            verdicts,
            all_passed,
            wall_time_ms,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestVerdict> {
        self.verdicts.iter().filter(|v| v.verdict != Verdict::Pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentToggles {
    pub retrieval: bool,
    pub planning: bool,
    pub debugging: bool,
}

impl Default for AgentToggles {
    fn default() -> Self {
        AgentToggles {
            retrieval: true,
            planning: true,
            debugging: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    MapCoder,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of exemplars, and therefore plans.
    pub k: usize,
    /// Debugging attempts per plan.
    pub t: usize,
    pub temperature: f64,
    pub per_test_timeout_ms: u64,
    pub agent_toggles: AgentToggles,
    pub mode: PipelineMode,
}

/// Named hyperparameter presets: `humaneval` uses k = t = 5, everything else
/// k = t = 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    HumanEval,
    Standard,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "humaneval" | "humanevalet" => Some(Preset::HumanEval),
            "standard" | "default" | "mbpp" | "mbppet" | "apps" | "xcodeeval"
            | "codecontests" | "contest" => Some(Preset::Standard),
            _ => None,
        }
    }

    pub fn k_t(self) -> (usize, usize) {
        match self {
            Preset::HumanEval => (5, 5),
            Preset::Standard => (3, 3),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Standard)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (k, t) = preset.k_t();
        RunConfig {
            k,
            t,
            temperature: 0.0,
            per_test_timeout_ms: 10_000,
            agent_toggles: AgentToggles::default(),
            mode: PipelineMode::MapCoder,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("temperature must be non-negative".into());
        }
        if self.per_test_timeout_ms == 0 {
            return Err("per-test timeout must be positive".into());
        }
        Ok(())
    }

    /// Debug budget actually applied per plan: zero when debugging is off.
    pub fn effective_t(&self) -> usize {
        if self.agent_toggles.debugging {
            self.t
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Retrieval,
    Planning,
    Coding,
    Debugging,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgentKind::Retrieval => "retrieval",
            AgentKind::Planning => "planning",
            AgentKind::Coding => "coding",
            AgentKind::Debugging => "debugging",
        };
        f.write_str(s)
    }
}

/// One successful backend call made on behalf of an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCall {
    pub agent: AgentKind,
    pub prompt: String,
    pub response: String,
    pub latency_ms: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Token counts were estimated from text length, not provider-reported.
    #[serde(default)]
    pub tokens_estimated: bool,
    /// Set on the re-ask issued after a response failed to parse.
    #[serde(default)]
    pub parse_retry: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub api_calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub wall_time_ms: u64,
    /// Calls whose token counts are estimates.
    #[serde(default)]
    pub estimated_calls: u64,
}

impl UsageTotals {
    pub fn from_calls<'a>(calls: impl IntoIterator<Item = &'a AgentCall>) -> Self {
        calls.into_iter().fold(UsageTotals::default(), |mut u, c| {
            u.api_calls += 1;
            u.tokens_in += c.tokens_in;
            u.tokens_out += c.tokens_out;
            u.wall_time_ms += c.latency_ms;
            u.estimated_calls += u64::from(c.tokens_estimated);
            u
        })
    }

    pub fn add(&mut self, other: &UsageTotals) {
        self.api_calls += other.api_calls;
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
        self.wall_time_ms += other.wall_time_ms;
        self.estimated_calls += other.estimated_calls;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Coded,
    Tested { all_passed: bool },
    Debugged { iteration: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub plan_index: usize,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Order in which plans were attempted and what happened to each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalTrace {
    pub ordered_plan_indices: Vec<usize>,
    pub events: Vec<TraceEntry>,
}

impl TraversalTrace {
    pub fn push(&mut self, plan_index: usize, event: TraceEvent) {
        self.events.push(TraceEntry { plan_index, event });
    }

    /// Checks the per-plan event grammar: `Coded` first, a `Tested` only
    /// directly after a `Coded` or `Debugged`, and debug iterations numbered
    /// consecutively from 1, each following a failed test.
    pub fn is_consistent(&self) -> bool {
        use std::collections::HashMap;
        #[derive(Clone, Copy, PartialEq)]
        enum St {
            Coded,
            Failed,
            Passed,
            Debugged,
        }
        let mut state: HashMap<usize, (St, u32)> = HashMap::new();
        for e in &self.events {
            let cur = state.get(&e.plan_index).copied();
            let next = match (cur, e.event) {
                (None, TraceEvent::Coded) => (St::Coded, 0),
                (Some((St::Coded | St::Debugged, d)), TraceEvent::Tested { all_passed }) => {
                    (if all_passed { St::Passed } else { St::Failed }, d)
                }
                (Some((St::Failed, d)), TraceEvent::Debugged { iteration })
                    if iteration == d + 1 =>
                {
                    (St::Debugged, iteration)
                }
                _ => return false,
            };
            state.insert(e.plan_index, next);
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub final_code: CandidateCode,
    pub solved_on_samples: bool,
    pub plans_tried: usize,
    pub debug_iterations_used: usize,
    pub transcript: Vec<AgentCall>,
    pub usage: UsageTotals,
    #[serde(default)]
    pub trace: TraversalTrace,
}
