//! Builders for well-formed agent responses, for scripting a
//! [`ScriptedBackend`](crate::llm::ScriptedBackend), and a content-keyed
//! executor for offline dry runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::domain::{CandidateCode, ExecMode, TestCase, TestReport, TestVerdict, Verdict};
use crate::executor::{CodeExecutor, ComparePolicy, ExecError, ExecLimits};

/// A `<problem>` block whose code carries one `# Step n:` comment per step.
pub fn exemplar_block(description: &str, steps: &[&str]) -> String {
    let mut code = String::new();
    for (i, s) in steps.iter().enumerate() {
        code.push_str(&format!("# Step {}: {}\npass\n", i + 1, s));
    }
    format!(
        "<problem>\n<description>\n{description}\n</description>\n<code>\n```python\n{code}```\n</code>\n<planning>\n{}\n</planning>\n</problem>\n",
        steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s))
            .collect::<Vec<_>>()
            .join("\n")
    )
}

/// A full retrieval answer with `blocks` and a shared algorithm/tutorial.
pub fn retrieval_response(blocks: &[String], algorithm: &str, tutorial: &str) -> String {
    format!(
        "<root>\n{}<algorithm>\n{algorithm}\n</algorithm>\n<tutorial>\n{tutorial}\n</tutorial>\n</root>\n",
        blocks.concat()
    )
}

/// `k` generic exemplars named `exemplar-1` .. `exemplar-k`.
pub fn generic_retrieval(k: usize) -> String {
    let blocks: Vec<String> = (1..=k)
        .map(|i| exemplar_block(&format!("exemplar-{i}"), &["read input", "compute", "print"]))
        .collect();
    retrieval_response(&blocks, "Brute-force", "Try every candidate.")
}

pub fn planning_response(steps: &[&str], confidence: f64) -> String {
    let list = steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n");
    format!("<plan>\n{list}\n</plan>\n<confidence>{confidence}</confidence>\n")
}

/// A response carrying `source` in a single python fence.
pub fn code_response(source: &str) -> String {
    format!("Here is the code:\n```python\n{}\n```\n", source.trim_end())
}

/// Judges candidates without running them: a candidate passes every test
/// iff its source contains the marker. Records each invocation.
#[derive(Debug)]
pub struct MarkerExecutor {
    marker: String,
    invocations: AtomicUsize,
    seen: Mutex<Vec<String>>,
}

impl MarkerExecutor {
    pub fn new(marker: impl Into<String>) -> Self {
        MarkerExecutor {
            marker: marker.into(),
            invocations: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    /// Sources judged so far, in order.
    pub fn seen(&self) -> Vec<String> {
        self.seen.lock().unwrap().clone()
    }
}

impl CodeExecutor for MarkerExecutor {
    fn run_candidate(
        &self,
        code: &CandidateCode,
        tests: &[TestCase],
        mode: ExecMode,
        _entry_point: Option<&str>,
        _limits: &ExecLimits,
        _policy: &ComparePolicy,
    ) -> Result<TestReport, ExecError> {
        if tests.is_empty() {
            return Err(ExecError::InvalidRequest("no tests to run".into()));
        }
        if tests.iter().any(|t| t.required_mode() != mode) {
            return Err(ExecError::InvalidRequest("test kind does not match mode".into()));
        }
        self.invocations.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(code.source.clone());
        let pass = code.source.contains(&self.marker);
        let verdicts = tests
            .iter()
            .map(|t| TestVerdict {
                label: t.label.clone(),
                verdict: if pass { Verdict::Pass } else { Verdict::WrongOutput },
                detail: if pass {
                    String::new()
                } else {
                    format!("test {} failed for marker-less code", t.label)
                },
            })
            .collect();
        Ok(TestReport::new(verdicts, 0))
    }
}
