//! Pass@k scoring, hidden-test judging, run records and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Problem, SolveOutcome, TestReport, UsageTotals};
use crate::executor::{CodeExecutor, ComparePolicy, ExecError, ExecLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// 1-based.
    pub attempt_index: usize,
    pub solved_hidden: bool,
    /// Absent when the solve itself failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<SolveOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty_tag: Option<String>,
    pub attempts: Vec<Attempt>,
}

impl ProblemResult {
    pub fn new(problem: &Problem) -> Self {
        ProblemResult {
            problem_id: problem.id.clone(),
            difficulty_tag: problem.difficulty_tag.clone(),
            attempts: Vec::new(),
        }
    }

    /// Appends an attempt, numbering it after the existing ones.
    pub fn push(&mut self, mut attempt: Attempt) {
        attempt.attempt_index = self.attempts.len() + 1;
        self.attempts.push(attempt);
    }

    pub fn indices_consecutive(&self) -> bool {
        self.attempts
            .iter()
            .enumerate()
            .all(|(i, a)| a.attempt_index == i + 1)
    }

    pub fn usage(&self) -> UsageTotals {
        let mut u = UsageTotals::default();
        for o in self.attempts.iter().filter_map(|a| a.outcome.as_ref()) {
            u.add(&o.usage);
        }
        u
    }

    fn successes_in_first(&self, k: usize) -> usize {
        self.attempts.iter().take(k).filter(|a| a.solved_hidden).count()
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("problem {problem_id:?} has {found} attempt(s), pass@{k} needs {k}")]
    InsufficientAttempts {
        problem_id: String,
        k: usize,
        found: usize,
    },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("run record line {line} is corrupt: {message}")]
    CorruptRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Fraction of problems with a success among the first k attempts.
    #[default]
    Plain,
    /// `1 - C(n-c, k) / C(n, k)` over all n attempts, averaged.
    Unbiased,
}

impl Estimator {
    pub fn parse(name: &str) -> Option<Estimator> {
        match name.to_ascii_lowercase().as_str() {
            "plain" => Some(Estimator::Plain),
            "unbiased" => Some(Estimator::Unbiased),
            _ => None,
        }
    }
}

fn check_attempts(results: &[ProblemResult], k: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    match results.iter().find(|r| r.attempts.len() < k) {
        Some(r) => Err(EvalError::InsufficientAttempts {
            problem_id: r.problem_id.clone(),
            k,
            found: r.attempts.len(),
        }),
        None => Ok(()),
    }
}

/// Fraction of problems where any of the first `k` attempts passed the
/// hidden tests. An empty result list scores 0.
pub fn pass_at_k(results: &[ProblemResult], k: usize) -> Result<f64, EvalError> {
    check_attempts(results, k)?;
    if results.is_empty() {
        return Ok(0.0);
    }
    let solved = results.iter().filter(|r| r.successes_in_first(k) > 0).count();
    Ok(solved as f64 / results.len() as f64)
}

/// Chance that a random size-`k` subset of `n` attempts with `c` successes
/// holds at least one success.
pub fn unbiased_single(n: usize, c: usize, k: usize) -> f64 {
    if n - c < k {
        return 1.0;
    }
    // product form avoids overflowing binomials
    1.0 - ((n - c + 1)..=n)
        .map(|i| 1.0 - k as f64 / i as f64)
        .product::<f64>()
}

pub fn pass_at_k_unbiased(results: &[ProblemResult], k: usize) -> Result<f64, EvalError> {
    check_attempts(results, k)?;
    if results.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = results
        .iter()
        .map(|r| unbiased_single(r.attempts.len(), r.successes_in_first(r.attempts.len()), k))
        .sum();
    Ok(total / results.len() as f64)
}

pub fn score(results: &[ProblemResult], k: usize, estimator: Estimator) -> Result<f64, EvalError> {
    match estimator {
        Estimator::Plain => pass_at_k(results, k),
        Estimator::Unbiased => pass_at_k_unbiased(results, k),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenJudgement {
    pub passed: bool,
    /// `None` when there were no hidden tests to run.
    pub report: Option<TestReport>,
    pub warning: Option<String>,
}

/// Runs the final code against the hidden tests only. With no hidden tests
/// the judgement passes vacuously and carries a warning.
pub fn judge_hidden(
    outcome: &SolveOutcome,
    problem: &Problem,
    executor: &dyn CodeExecutor,
    limits: &ExecLimits,
    policy: &ComparePolicy,
) -> Result<HiddenJudgement, ExecError> {
    if problem.hidden_tests.is_empty() {
        return Ok(HiddenJudgement {
            passed: true,
            report: None,
            warning: Some(format!("{}: no hidden tests; counted as passing", problem.id)),
        });
    }
    let report = executor.run_candidate(
        &outcome.final_code,
        &problem.hidden_tests,
        problem.exec_mode,
        problem.entry_point.as_deref(),
        limits,
        policy,
    )?;
    Ok(HiddenJudgement {
        passed: report.all_passed,
        report: Some(report),
        warning: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub estimator: Estimator,
    pub problems: usize,
    pub pass_at: BTreeMap<usize, f64>,
    /// pass@1 per difficulty tag; untagged problems are left out.
    pub per_difficulty: BTreeMap<String, f64>,
    pub totals: UsageTotals,
    pub per_problem: Vec<ProblemResult>,
}

/// Keeps the last record per problem id, ordered by first appearance.
pub fn dedup_last(records: Vec<ProblemResult>) -> Vec<ProblemResult> {
    let mut order: Vec<String> = Vec::new();
    let mut latest: BTreeMap<String, ProblemResult> = BTreeMap::new();
    for r in records {
        if !latest.contains_key(&r.problem_id) {
            order.push(r.problem_id.clone());
        }
        latest.insert(r.problem_id.clone(), r);
    }
    order
        .into_iter()
        .map(|id| latest.remove(&id).expect("every id was inserted"))
        .collect()
}

pub fn build_report(
    records: Vec<ProblemResult>,
    ks: &[usize],
    estimator: Estimator,
) -> Result<Report, EvalError> {
    let per_problem = dedup_last(records);
    let mut pass_at = BTreeMap::new();
    for &k in ks {
        pass_at.insert(k, score(&per_problem, k, estimator)?);
    }
    let mut by_tag: BTreeMap<String, Vec<ProblemResult>> = BTreeMap::new();
    for r in &per_problem {
        if let Some(tag) = &r.difficulty_tag {
            by_tag.entry(tag.clone()).or_default().push(r.clone());
        }
    }
    let mut per_difficulty = BTreeMap::new();
    for (tag, rs) in by_tag {
        per_difficulty.insert(tag, score(&rs, 1, estimator)?);
    }
    let mut totals = UsageTotals::default();
    for r in &per_problem {
        totals.add(&r.usage());
    }
    Ok(Report {
        estimator,
        problems: per_problem.len(),
        pass_at,
        per_difficulty,
        totals,
        per_problem,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary without the per-problem details.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let label = match self.estimator {
            Estimator::Plain => "plain",
            Estimator::Unbiased => "unbiased estimator",
        };
        let _ = writeln!(s, "problems: {}", self.problems);
        let _ = writeln!(s, "{:<14} {:>8}", format!("metric ({label})"), "value");
        for (k, v) in &self.pass_at {
            let _ = writeln!(s, "{:<14} {:>8.4}", format!("pass@{k}"), v);
        }
        for (tag, v) in &self.per_difficulty {
            let _ = writeln!(s, "{:<14} {:>8.4}", format!("pass@1[{tag}]"), v);
        }
        let t = &self.totals;
        let _ = writeln!(s, "{:<14} {:>8}", "api_calls", t.api_calls);
        let _ = writeln!(s, "{:<14} {:>8}", "tokens_in", t.tokens_in);
        let _ = writeln!(s, "{:<14} {:>8}", "tokens_out", t.tokens_out);
        let _ = writeln!(s, "{:<14} {:>8}", "wall_time_ms", t.wall_time_ms);
        if t.estimated_calls > 0 {
            let _ = writeln!(s, "({} call(s) with estimated token counts)", t.estimated_calls);
        }
        s
    }
}

/// Append-only run-record writer; every record is flushed as it is written.
#[derive(Debug)]
pub struct RunWriter {
    file: File,
}

impl RunWriter {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RunWriter { file })
    }

    /// Truncates any existing file first.
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(RunWriter {
            file: File::create(path)?,
        })
    }

    pub fn append(&mut self, result: &ProblemResult) -> io::Result<()> {
        let mut line = serde_json::to_vec(result).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Loads every record in file order. A missing file is an empty run.
pub fn read_records(path: &Path) -> Result<Vec<ProblemResult>, EvalError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProblemResult =
            serde_json::from_str(&line).map_err(|e| EvalError::CorruptRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        if !rec.indices_consecutive() {
            return Err(EvalError::CorruptRecord {
                line: i + 1,
                message: "attempt indices are not consecutive from 1".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// What a resumed run already has.
#[derive(Debug, Default, Clone)]
pub struct RunState {
    pub results: BTreeMap<String, ProblemResult>,
}

impl RunState {
    pub fn resume(path: &Path) -> Result<Self, EvalError> {
        let results = read_records(path)?
            .into_iter()
            .map(|r| (r.problem_id.clone(), r))
            .collect();
        Ok(RunState { results })
    }

    pub fn is_complete(&self, problem_id: &str, attempts: usize) -> bool {
        self.results
            .get(problem_id)
            .is_some_and(|r| r.attempts.len() >= attempts)
    }
}

/// True when the file is absent or empty.
pub fn is_fresh(path: &Path) -> bool {
    fs::metadata(path).map_or(true, |m| m.len() == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CandidateCode, ExecMode, Producer, TestCase, TraversalTrace};
    use crate::script::MarkerExecutor;
    use proptest::prelude::*;

    fn result(id: &str, solved: &[bool]) -> ProblemResult {
        let mut r = ProblemResult {
            problem_id: id.into(),
            difficulty_tag: None,
            attempts: vec![],
        };
        for &s in solved {
            r.push(Attempt {
                attempt_index: 0,
                solved_hidden: s,
                outcome: None,
                error: None,
                warnings: vec![],
            });
        }
        r
    }

    #[test]
    fn three_of_ten_first_attempts() {
        let rs: Vec<_> = (0..10).map(|i| result(&i.to_string(), &[i < 3])).collect();
        assert_eq!(pass_at_k(&rs, 1).unwrap(), 0.3);
    }

    #[test]
    fn later_success_counts_for_larger_k() {
        let rs = vec![result("a", &[false, true])];
        assert_eq!(pass_at_k(&rs, 1).unwrap(), 0.0);
        assert_eq!(pass_at_k(&rs, 2).unwrap(), 1.0);
    }

    #[test]
    fn insufficient_attempts() {
        let rs = vec![result("a", &[true])];
        assert!(matches!(
            pass_at_k(&rs, 2),
            Err(EvalError::InsufficientAttempts { k: 2, found: 1, .. })
        ));
        assert!(matches!(pass_at_k(&rs, 0), Err(EvalError::ZeroK)));
    }

    #[test]
    fn unbiased_known_values() {
        // n=2, c=1, k=1: half the single draws succeed
        assert!((unbiased_single(2, 1, 1) - 0.5).abs() < 1e-12);
        assert_eq!(unbiased_single(5, 0, 3), 0.0);
        assert_eq!(unbiased_single(3, 2, 2), 1.0);
        // n=4, c=1, k=2: 1 - C(3,2)/C(4,2) = 1 - 3/6
        assert!((unbiased_single(4, 1, 2) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn plain_matches_enumeration(m in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 1..8), k in 1usize..=4) {
            let rs: Vec<_> = m.iter().enumerate().map(|(i, row)| result(&i.to_string(), row)).collect();
            let mut solved = 0;
            for row in &m {
                let mut any = false;
                for cell in row.iter().take(k) {
                    any |= *cell;
                }
                solved += usize::from(any);
            }
            prop_assert_eq!(pass_at_k(&rs, k).unwrap(), solved as f64 / m.len() as f64);
            if k > 1 {
                prop_assert!(pass_at_k(&rs, k - 1).unwrap() <= pass_at_k(&rs, k).unwrap());
            }
        }
    }

    fn problem(hidden: Vec<TestCase>) -> Problem {
        Problem {
            id: "p".into(),
            description: "d".into(),
            exec_mode: ExecMode::StdinStdout,
            entry_point: None,
            sample_io: vec![TestCase::io_pair("s", "1", "1")],
            hidden_tests: hidden,
            source_dataset: "t".into(),
            difficulty_tag: None,
        }
    }

    fn outcome(src: &str) -> SolveOutcome {
        SolveOutcome {
            final_code: CandidateCode::new(src, "python", Producer::Coding).unwrap(),
            solved_on_samples: true,
            plans_tried: 1,
            debug_iterations_used: 0,
            transcript: vec![],
            usage: UsageTotals {
                api_calls: 4,
                tokens_in: 10,
                tokens_out: 5,
                wall_time_ms: 7,
                estimated_calls: 0,
            },
            trace: TraversalTrace::default(),
        }
    }

    #[test]
    fn hidden_judging_uses_hidden_tests_only() {
        let exec = MarkerExecutor::new("PASS");
        let p = problem(vec![TestCase::io_pair("h", "2", "2")]);
        let j = judge_hidden(&outcome("x"), &p, &exec, &ExecLimits::default(), &ComparePolicy::default()).unwrap();
        assert!(!j.passed);
        assert_eq!(j.report.unwrap().verdicts[0].label, "h");
        let j = judge_hidden(&outcome("PASS"), &p, &exec, &ExecLimits::default(), &ComparePolicy::default()).unwrap();
        assert!(j.passed);
    }

    #[test]
    fn empty_hidden_set_is_vacuous_with_warning() {
        let exec = MarkerExecutor::new("PASS");
        let j = judge_hidden(&outcome("x"), &problem(vec![]), &exec, &ExecLimits::default(), &ComparePolicy::default()).unwrap();
        assert!(j.passed && j.warning.is_some());
        assert_eq!(exec.invocations(), 0);
    }

    #[test]
    fn report_totals_and_dedup() {
        let mut a = result("a", &[true]);
        a.attempts[0].outcome = Some(outcome("x"));
        a.difficulty_tag = Some("easy".into());
        let b_old = result("b", &[true]);
        let mut b = result("b", &[false]);
        b.attempts[0].outcome = Some(outcome("y"));
        b.difficulty_tag = Some("hard".into());
        let rep = build_report(vec![a, b_old, b], &[1], Estimator::Plain).unwrap();
        assert_eq!(rep.problems, 2);
        assert_eq!(rep.pass_at[&1], 0.5);
        assert_eq!(rep.totals.api_calls, 8);
        assert_eq!(rep.per_difficulty["easy"], 1.0);
        assert_eq!(rep.per_difficulty["hard"], 0.0);
        assert!(rep.to_text().contains("pass@1"));
        assert_eq!(rep.to_json(), rep.clone().to_json());
    }

    #[test]
    fn empty_report() {
        let rep = build_report(vec![], &[1, 5], Estimator::Plain).unwrap();
        assert_eq!(rep.problems, 0);
        assert_eq!(rep.pass_at[&5], 0.0);
    }

    #[test]
    fn persist_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        assert!(RunState::resume(&path).unwrap().results.is_empty());
        let mut w = RunWriter::open(&path).unwrap();
        for id in ["a", "b", "c"] {
            w.append(&result(id, &[true])).unwrap();
        }
        let st = RunState::resume(&path).unwrap();
        assert_eq!(st.results.len(), 3);
        assert!(st.is_complete("b", 1));
        assert!(!st.is_complete("b", 2));
        assert!(!st.is_complete("d", 1));
    }

    #[test]
    fn truncated_last_line_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = RunWriter::create(&path).unwrap();
        w.append(&result("a", &[true])).unwrap();
        w.append(&result("b", &[true])).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() - 10]).unwrap();
        match RunState::resume(&path) {
            Err(EvalError::CorruptRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
