//! Runs candidate code against tests, one child process per test.
//!
//! Stdin/stdout tests feed the input to the candidate program and compare
//! its output under a [`ComparePolicy`]. Function-call tests go through an
//! external harness (the exec shim): the engine writes one JSON request
//! `{code, test, entry_point}` to the shim's stdin and reads one JSON
//! verdict record `{verdict, detail}` back from its stdout. Timeouts are
//! always enforced here, by killing the child's process group.

mod compare;
pub mod process;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CandidateCode, ExecMode, TestCase, TestKind, TestReport, TestVerdict, Verdict};
use process::{run_child, ChildLimits, ChildOutcome, Pool};

pub use compare::{compare_output, ComparePolicy};

/// Environment variable overriding the shim command (whitespace separated).
pub const SHIM_ENV: &str = "PLANCODE_SHIM";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecLimits {
    pub per_test_timeout_ms: u64,
    pub max_output_bytes: usize,
    pub max_memory_mb: Option<u64>,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            per_test_timeout_ms: 10_000,
            max_output_bytes: 64 * 1024,
            max_memory_mb: None,
        }
    }
}

impl ExecLimits {
    pub fn with_timeout_ms(ms: u64) -> Self {
        ExecLimits {
            per_test_timeout_ms: ms,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        self.per_test_timeout_ms > 0
            && self.max_output_bytes > 0
            && self.max_memory_mb.is_none_or(|m| m > 0)
    }

    fn child(&self) -> ChildLimits {
        ChildLimits {
            timeout: Duration::from_millis(self.per_test_timeout_ms),
            max_output_bytes: self.max_output_bytes,
            max_memory_mb: self.max_memory_mb,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("invalid execution request: {0}")]
    InvalidRequest(String),
    #[error("internal executor error: {0}")]
    Internal(String),
}

impl From<io::Error> for ExecError {
    fn from(e: io::Error) -> Self {
        ExecError::Internal(e.to_string())
    }
}

/// Anything that can judge a candidate against a list of tests.
pub trait CodeExecutor: Send + Sync {
    fn run_candidate(
        &self,
        code: &CandidateCode,
        tests: &[TestCase],
        mode: ExecMode,
        entry_point: Option<&str>,
        limits: &ExecLimits,
        policy: &ComparePolicy,
    ) -> Result<TestReport, ExecError>;
}

impl<E: CodeExecutor + ?Sized> CodeExecutor for &E {
    fn run_candidate(
        &self,
        code: &CandidateCode,
        tests: &[TestCase],
        mode: ExecMode,
        entry_point: Option<&str>,
        limits: &ExecLimits,
        policy: &ComparePolicy,
    ) -> Result<TestReport, ExecError> {
        (**self).run_candidate(code, tests, mode, entry_point, limits, policy)
    }
}

/// How to build and run a program in one language. Arguments may use the
/// placeholders `{src}`, `{exe}` and `{dir}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRunner {
    pub file_name: String,
    #[serde(default)]
    pub compile: Option<Vec<String>>,
    pub run: Vec<String>,
}

impl LanguageRunner {
    fn new(file_name: &str, compile: Option<&[&str]>, run: &[&str]) -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        LanguageRunner {
            file_name: file_name.into(),
            compile: compile.map(owned),
            run: owned(run),
        }
    }
}

pub fn builtin_runners() -> BTreeMap<String, LanguageRunner> {
    let py = LanguageRunner::new("main.py", None, &["python3", "{src}"]);
    let cpp = LanguageRunner::new(
        "main.cpp",
        Some(&["g++", "-O2", "-std=c++17", "-o", "{exe}", "{src}"]),
        &["{exe}"],
    );
    let c = LanguageRunner::new(
        "main.c",
        Some(&["gcc", "-O2", "-o", "{exe}", "{src}", "-lm"]),
        &["{exe}"],
    );
    let rust = LanguageRunner::new("main.rs", Some(&["rustc", "-O", "-o", "{exe}", "{src}"]), &["{exe}"]);
    let bash = LanguageRunner::new("main.sh", None, &["bash", "{src}"]);
    let mut m = BTreeMap::new();
    for name in ["python", "python3", "py"] {
        m.insert(name.to_string(), py.clone());
    }
    for name in ["cpp", "c++", "cxx"] {
        m.insert(name.to_string(), cpp.clone());
    }
    m.insert("c".into(), c);
    m.insert("rust".into(), rust);
    m.insert("bash".into(), bash.clone());
    m.insert("sh".into(), bash);
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    /// Language tag (lowercase) to runner.
    pub runners: BTreeMap<String, LanguageRunner>,
    /// Command launching the function-call harness.
    pub shim_command: Vec<String>,
    /// Maximum number of concurrently running child processes.
    pub workers: usize,
    pub compile_timeout_ms: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        let shim_command = std::env::var(SHIM_ENV)
            .ok()
            .map(|s| s.split_whitespace().map(String::from).collect::<Vec<_>>())
            .filter(|v| !v.is_empty())
            .unwrap_or_else(|| vec!["python3".into(), "-m".into(), "plancode_shim".into()]);
        ExecutorConfig {
            runners: builtin_runners(),
            shim_command,
            workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
            compile_timeout_ms: 60_000,
        }
    }
}

/// Verdict record produced by the function-call harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimVerdict {
    pub verdict: String,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimRequest<'a> {
    pub code: &'a str,
    pub test: &'a str,
    pub entry_point: Option<&'a str>,
}

/// Maps a shim verdict string onto the engine's verdicts. A failed
/// assertion means the code ran and produced a wrong result.
pub fn map_shim_verdict(v: &str) -> Option<Verdict> {
    match v {
        "pass" => Some(Verdict::Pass),
        "assertion_failed" => Some(Verdict::WrongOutput),
        "runtime_error" => Some(Verdict::RuntimeError),
        "harness_error" => Some(Verdict::HarnessError),
        _ => None,
    }
}

/// Keeps at most `max` bytes from the start of `s`.
pub fn truncate_head(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…[truncated]", &s[..end])
}

/// Keeps at most `max` bytes from the end of `s`.
pub fn truncate_tail(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut start = s.len() - max;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    format!("[truncated]…{}", &s[start..])
}

fn lossy(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// Process-based executor. Safe to share across threads; the pool bounds
/// how many children run at once.
#[derive(Debug)]
pub struct ProcessExecutor {
    config: ExecutorConfig,
    pool: Pool,
}

impl Default for ProcessExecutor {
    fn default() -> Self {
        Self::new(ExecutorConfig::default())
    }
}

struct Build {
    _dir: tempfile::TempDir,
    run: Vec<String>,
}

impl ProcessExecutor {
    pub fn new(config: ExecutorConfig) -> Self {
        let pool = Pool::new(config.workers);
        ProcessExecutor { config, pool }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    fn spawn(
        &self,
        argv: &[String],
        cwd: &Path,
        stdin: &[u8],
        limits: &ChildLimits,
    ) -> Result<ChildOutcome, ExecError> {
        let _permit = self.pool.acquire();
        run_child(argv, cwd, stdin, limits).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                ExecError::SandboxUnavailable(format!(
                    "cannot launch {}: {e}",
                    argv.first().map_or("", String::as_str)
                ))
            }
            _ => ExecError::Internal(e.to_string()),
        })
    }

    /// Writes the source and runs the compile step, if any. A failed
    /// compilation is returned as `Err(Ok(detail))`.
    fn build(
        &self,
        code: &CandidateCode,
        limits: &ExecLimits,
    ) -> Result<Result<Build, String>, ExecError> {
        let tag = code.language_tag.to_ascii_lowercase();
        let runner = self.config.runners.get(&tag).ok_or_else(|| {
            ExecError::SandboxUnavailable(format!("no runner for language {:?}", code.language_tag))
        })?;
        let dir = tempfile::tempdir()?;
        let src = dir.path().join(&runner.file_name);
        std::fs::write(&src, &code.source)?;
        let exe = dir.path().join("main.bin");
        let subst = |args: &[String]| -> Vec<String> {
            args.iter()
                .map(|a| {
                    a.replace("{src}", &src.to_string_lossy())
                        .replace("{exe}", &exe.to_string_lossy())
                        .replace("{dir}", &dir.path().to_string_lossy())
                })
                .collect()
        };
        if let Some(compile) = &runner.compile {
            let lim = ChildLimits {
                timeout: Duration::from_millis(self.config.compile_timeout_ms),
                max_output_bytes: limits.max_output_bytes,
                max_memory_mb: None,
            };
            let out = self.spawn(&subst(compile), dir.path(), b"", &lim)?;
            if !out.exited_ok() {
                let why = if out.timed_out {
                    "compilation timed out".to_string()
                } else {
                    format!("compilation failed ({})", out.describe_status())
                };
                return Ok(Err(format!(
                    "{why}\n{}",
                    truncate_tail(&lossy(&out.stderr), limits.max_output_bytes)
                )));
            }
        }
        let run = subst(&runner.run);
        Ok(Ok(Build { _dir: dir, run }))
    }

    fn judge_io(
        &self,
        run: &[String],
        input: &str,
        expected: &str,
        limits: &ExecLimits,
        policy: &ComparePolicy,
    ) -> Result<(Verdict, String), ExecError> {
        let cwd = tempfile::tempdir()?;
        let out = self.spawn(run, cwd.path(), input.as_bytes(), &limits.child())?;
        let max = limits.max_output_bytes;
        let stderr_tail = || truncate_tail(&lossy(&out.stderr), max);
        if out.timed_out {
            return Ok((
                Verdict::Timeout,
                format!("time limit of {} ms exceeded", limits.per_test_timeout_ms),
            ));
        }
        if out.output_overflow {
            return Ok((
                Verdict::HarnessError,
                format!("output exceeded {max} bytes; run aborted"),
            ));
        }
        if !out.exited_ok() {
            return Ok((
                Verdict::RuntimeError,
                truncate_head(
                    &format!(
                        "input:\n{}\n{}\nstderr:\n{}",
                        input.trim_end(),
                        out.describe_status(),
                        stderr_tail()
                    ),
                    max,
                ),
            ));
        }
        let actual = lossy(&out.stdout);
        if compare_output(expected, &actual, policy) {
            Ok((Verdict::Pass, String::new()))
        } else {
            Ok((
                Verdict::WrongOutput,
                truncate_head(
                    &format!(
                        "input:\n{}\nexpected output:\n{}\nactual output:\n{}",
                        input.trim_end(),
                        expected.trim_end(),
                        actual.trim_end()
                    ),
                    max,
                ),
            ))
        }
    }

    fn judge_assertion(
        &self,
        code: &CandidateCode,
        test: &str,
        entry_point: Option<&str>,
        limits: &ExecLimits,
    ) -> Result<(Verdict, String), ExecError> {
        let request = serde_json::to_vec(&ShimRequest {
            code: &code.source,
            test,
            entry_point,
        })
        .map_err(|e| ExecError::Internal(e.to_string()))?;
        let cwd = tempfile::tempdir()?;
        let out = self.spawn(&self.config.shim_command, cwd.path(), &request, &limits.child())?;
        let max = limits.max_output_bytes;
        if out.timed_out {
            return Ok((
                Verdict::Timeout,
                format!("time limit of {} ms exceeded running: {}", limits.per_test_timeout_ms, test.trim()),
            ));
        }
        if out.output_overflow {
            return Ok((
                Verdict::HarnessError,
                format!("harness output exceeded {max} bytes"),
            ));
        }
        let stdout = lossy(&out.stdout);
        let record = stdout
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| serde_json::from_str::<ShimVerdict>(l).ok());
        match record {
            Some(rec) => match map_shim_verdict(&rec.verdict) {
                Some(v) => Ok((v, truncate_head(&rec.detail, max))),
                None => Ok((
                    Verdict::HarnessError,
                    format!("harness returned unknown verdict {:?}", rec.verdict),
                )),
            },
            // died from a signal (e.g. memory limit) before reporting
            None if out.signal().is_some() => Ok((
                Verdict::RuntimeError,
                truncate_head(
                    &format!(
                        "{} while running: {}\n{}",
                        out.describe_status(),
                        test.trim(),
                        truncate_tail(&lossy(&out.stderr), max)
                    ),
                    max,
                ),
            )),
            None => Ok((
                Verdict::HarnessError,
                truncate_head(
                    &format!(
                        "harness produced no verdict record ({})\n{}",
                        out.describe_status(),
                        truncate_tail(&lossy(&out.stderr), max)
                    ),
                    max,
                ),
            )),
        }
    }
}

impl CodeExecutor for ProcessExecutor {
    fn run_candidate(
        &self,
        code: &CandidateCode,
        tests: &[TestCase],
        mode: ExecMode,
        entry_point: Option<&str>,
        limits: &ExecLimits,
        policy: &ComparePolicy,
    ) -> Result<TestReport, ExecError> {
        if tests.is_empty() {
            return Err(ExecError::InvalidRequest("no tests to run".into()));
        }
        if let Some(t) = tests.iter().find(|t| t.required_mode() != mode) {
            return Err(ExecError::InvalidRequest(format!(
                "test {} cannot run in {mode} mode",
                t.label
            )));
        }
        if !limits.is_valid() || !policy.is_valid() {
            return Err(ExecError::InvalidRequest("limits and tolerance must be positive".into()));
        }
        let started = Instant::now();
        let mut verdicts = Vec::with_capacity(tests.len());
        match mode {
            ExecMode::StdinStdout => {
                let build = self.build(code, limits)?;
                for t in tests {
                    let TestKind::IoPair {
                        input,
                        expected_output,
                    } = &t.kind
                    else {
                        unreachable!("mode checked above")
                    };
                    let (verdict, detail) = match &build {
                        Ok(b) => self.judge_io(&b.run, input, expected_output, limits, policy)?,
                        Err(compile_detail) => (Verdict::RuntimeError, compile_detail.clone()),
                    };
                    verdicts.push(TestVerdict {
                        label: t.label.clone(),
                        verdict,
                        detail,
                    });
                }
            }
            ExecMode::FunctionCall => {
                for t in tests {
                    let TestKind::Assertion { text } = &t.kind else {
                        unreachable!("mode checked above")
                    };
                    let (verdict, detail) = self.judge_assertion(code, text, entry_point, limits)?;
                    verdicts.push(TestVerdict {
                        label: t.label.clone(),
                        verdict,
                        detail,
                    });
                }
            }
        }
        Ok(TestReport::new(verdicts, started.elapsed().as_millis() as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Producer;

    fn py(src: &str) -> CandidateCode {
        CandidateCode::new(src, "python", Producer::Coding).unwrap()
    }

    fn io(input: &str, out: &str) -> TestCase {
        TestCase::io_pair("t", input, out)
    }

    fn run(code: &CandidateCode, tests: &[TestCase], limits: ExecLimits) -> TestReport {
        ProcessExecutor::default()
            .run_candidate(code, tests, ExecMode::StdinStdout, None, &limits, &ComparePolicy::default())
            .unwrap()
    }

    #[test]
    fn stdin_pass_and_wrong_output() {
        let code = py("a, b = map(int, input().split())\nprint(a + b)");
        let r = run(&code, &[io("1 2\n", "3\n"), io("2 2\n", "5\n")], ExecLimits::default());
        assert_eq!(r.verdicts[0].verdict, Verdict::Pass);
        assert_eq!(r.verdicts[1].verdict, Verdict::WrongOutput);
        assert!(r.verdicts[1].detail.contains("expected output:\n5"));
        assert!(r.verdicts[1].detail.contains("actual output:\n4"));
        assert!(!r.all_passed);
    }

    #[test]
    fn stdin_runtime_error_carries_stderr() {
        let r = run(&py("raise ValueError('boom')"), &[io("x\n", "y\n")], ExecLimits::default());
        assert_eq!(r.verdicts[0].verdict, Verdict::RuntimeError);
        assert!(r.verdicts[0].detail.contains("ValueError: boom"));
    }

    #[test]
    fn stdin_timeout() {
        let r = run(&py("while True: pass"), &[io("1\n", "1\n")], ExecLimits::with_timeout_ms(500));
        assert_eq!(r.verdicts[0].verdict, Verdict::Timeout);
        assert!(r.wall_time_ms >= 500);
    }

    #[test]
    fn stdin_output_flood_is_harness_error() {
        let l = ExecLimits {
            max_output_bytes: 4096,
            ..ExecLimits::default()
        };
        let r = run(&py("while True: print('x' * 100)"), &[io("1\n", "1\n")], l);
        assert_eq!(r.verdicts[0].verdict, Verdict::HarnessError);
    }

    #[test]
    fn unknown_language_is_unavailable() {
        let code = CandidateCode::new("x", "cobol", Producer::Coding).unwrap();
        let e = ProcessExecutor::default()
            .run_candidate(&code, &[io("1", "1")], ExecMode::StdinStdout, None, &ExecLimits::default(), &ComparePolicy::default())
            .unwrap_err();
        assert!(matches!(e, ExecError::SandboxUnavailable(_)));
    }

    #[test]
    fn missing_shim_is_unavailable() {
        let exec = ProcessExecutor::new(ExecutorConfig {
            shim_command: vec!["no-such-shim-binary".into()],
            ..ExecutorConfig::default()
        });
        let e = exec
            .run_candidate(
                &py("def f(): return 1"),
                &[TestCase::assertion("a", "assert f() == 1")],
                ExecMode::FunctionCall,
                Some("f"),
                &ExecLimits::default(),
                &ComparePolicy::default(),
            )
            .unwrap_err();
        assert!(matches!(e, ExecError::SandboxUnavailable(_)));
    }

    #[test]
    fn precondition_checks() {
        let exec = ProcessExecutor::default();
        let code = py("print(1)");
        assert!(matches!(
            exec.run_candidate(&code, &[], ExecMode::StdinStdout, None, &ExecLimits::default(), &ComparePolicy::default()),
            Err(ExecError::InvalidRequest(_))
        ));
        assert!(matches!(
            exec.run_candidate(
                &code,
                &[TestCase::assertion("a", "assert True")],
                ExecMode::StdinStdout,
                None,
                &ExecLimits::default(),
                &ComparePolicy::default()
            ),
            Err(ExecError::InvalidRequest(_))
        ));
    }

    #[test]
    fn shim_verdict_mapping() {
        assert_eq!(map_shim_verdict("pass"), Some(Verdict::Pass));
        assert_eq!(map_shim_verdict("assertion_failed"), Some(Verdict::WrongOutput));
        assert_eq!(map_shim_verdict("runtime_error"), Some(Verdict::RuntimeError));
        assert_eq!(map_shim_verdict("harness_error"), Some(Verdict::HarnessError));
        assert_eq!(map_shim_verdict("PASS"), None);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let s = "ééééé";
        assert!(truncate_head(s, 3).starts_with('é'));
        assert!(truncate_tail(s, 3).ends_with('é'));
        assert_eq!(truncate_head("abc", 10), "abc");
    }

    #[test]
    fn shim_request_wire_shape() {
        let v = serde_json::to_value(ShimRequest {
            code: "c",
            test: "t",
            entry_point: None,
        })
        .unwrap();
        assert_eq!(v, serde_json::json!({"code": "c", "test": "t", "entry_point": null}));
    }
}
