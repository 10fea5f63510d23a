//! Benchmark loaders. Every supported file format is converted into the
//! normalized [`Problem`] schema, one JSON object per line.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{validate_problem, ExecMode, Problem, TestCase, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// The native schema, as written by [`write_jsonl`].
    Normalized,
    /// `task_id`, `prompt`, `entry_point`, `test`, optional `test_case_list`.
    HumanEvalJsonl,
    /// `task_id`, `text`, `code`, `test_list`, optional extended lists.
    MbppJsonl,
    /// Stdin/stdout problems with public and private input/output pairs.
    ContestJsonl,
}

impl Format {
    pub fn parse(name: &str) -> Option<Format> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "normalized" | "native" | "jsonl" => Some(Format::Normalized),
            "humaneval" | "humanevaljsonl" | "humanevalet" => Some(Format::HumanEvalJsonl),
            "mbpp" | "mbppjsonl" | "mbppet" => Some(Format::MbppJsonl),
            "contest" | "contestjsonl" | "apps" | "codecontests" | "xcodeeval" => {
                Some(Format::ContestJsonl)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: not valid JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate problem id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: problem {id:?} is invalid: {}", fmt_violations(.violations))]
    InvalidProblem {
        line: usize,
        id: String,
        violations: Vec<Violation>,
    },
    #[error("problem {id:?} has {found} test(s); at least 2 are needed to split off a sample")]
    InsufficientTests { id: String, found: usize },
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Parse { line, .. }
            | DatasetError::DuplicateId { line, .. }
            | DatasetError::Schema { line, .. }
            | DatasetError::InvalidProblem { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Reads a dataset file. Blank lines are skipped but still counted, so
/// reported line numbers match an editor's.
pub fn load_dataset(path: &Path, format: Format) -> Result<Vec<Problem>, DatasetError> {
    parse_dataset(&fs::read_to_string(path)?, format)
}

pub fn parse_dataset(text: &str, format: Format) -> Result<Vec<Problem>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        let problem = convert(value, format, line)?;
        if !seen.insert(problem.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line,
                id: problem.id,
            });
        }
        let violations = validate_problem(&problem);
        if !violations.is_empty() {
            return Err(DatasetError::InvalidProblem {
                line,
                id: problem.id,
                violations,
            });
        }
        out.push(problem);
    }
    Ok(out)
}

fn convert(value: Value, format: Format, line: usize) -> Result<Problem, DatasetError> {
    if format == Format::Normalized {
        return serde_json::from_value(value).map_err(|e| DatasetError::Schema {
            line,
            field: "<record>".into(),
            message: e.to_string(),
        });
    }
    let Value::Object(obj) = value else {
        return Err(schema(line, "<record>", "expected a JSON object"));
    };
    let rec = Record { obj, line };
    match format {
        Format::HumanEvalJsonl => humaneval(&rec),
        Format::MbppJsonl => mbpp(&rec),
        Format::ContestJsonl => contest(&rec),
        Format::Normalized => unreachable!(),
    }
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        line,
        field: field.into(),
        message: message.into(),
    }
}

/// Field access with schema errors that name the field.
struct Record {
    obj: Map<String, Value>,
    line: usize,
}

impl Record {
    fn first<'a>(&'a self, names: &[&'a str]) -> Option<(&'a str, &'a Value)> {
        names
            .iter()
            .find_map(|n| self.obj.get(*n).filter(|v| !v.is_null()).map(|v| (*n, v)))
    }

    fn err(&self, field: &str, message: impl Into<String>) -> DatasetError {
        schema(self.line, field, message)
    }

    /// String or integer id.
    fn id(&self, names: &[&str]) -> Result<String, DatasetError> {
        match self.first(names) {
            Some((_, Value::String(s))) => Ok(s.clone()),
            Some((_, Value::Number(n))) => Ok(n.to_string()),
            Some((f, _)) => Err(self.err(f, "expected a string or integer")),
            None => Err(self.err(names[0], "missing")),
        }
    }

    fn string(&self, names: &[&str]) -> Result<String, DatasetError> {
        self.opt_string(names)?
            .ok_or_else(|| self.err(names[0], "missing"))
    }

    fn opt_string(&self, names: &[&str]) -> Result<Option<String>, DatasetError> {
        match self.first(names) {
            Some((_, Value::String(s))) => Ok(Some(s.clone())),
            Some((f, _)) => Err(self.err(f, "expected a string")),
            None => Ok(None),
        }
    }

    fn strings(&self, names: &[&str]) -> Result<Option<Vec<String>>, DatasetError> {
        let Some((f, v)) = self.first(names) else {
            return Ok(None);
        };
        let arr = v.as_array().ok_or_else(|| self.err(f, "expected a list of strings"))?;
        arr.iter()
            .map(|x| {
                x.as_str()
                    .map(String::from)
                    .ok_or_else(|| self.err(f, "expected a list of strings"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Input/output pairs, either `[{input, output}, ...]` or
    /// `{input: [...], output: [...]}`.
    fn io_pairs(&self, names: &[&str], prefix: &str) -> Result<Vec<TestCase>, DatasetError> {
        let Some((f, v)) = self.first(names) else {
            return Ok(Vec::new());
        };
        let bad = || self.err(f, "expected input/output pairs");
        let text = |v: &Value| v.as_str().map(String::from).ok_or_else(bad);
        let pairs: Vec<(String, String)> = match v {
            Value::Array(items) => items
                .iter()
                .map(|it| {
                    let o = it.as_object().ok_or_else(bad)?;
                    let input = o.get("input").ok_or_else(bad)?;
                    let output = o
                        .get("output")
                        .or_else(|| o.get("expected_output"))
                        .ok_or_else(bad)?;
                    Ok((text(input)?, text(output)?))
                })
                .collect::<Result<_, DatasetError>>()?,
            Value::Object(o) => {
                let ins = o.get("input").and_then(Value::as_array).ok_or_else(bad)?;
                let outs = o.get("output").and_then(Value::as_array).ok_or_else(bad)?;
                if ins.len() != outs.len() {
                    return Err(self.err(f, "input and output lists differ in length"));
                }
                ins.iter()
                    .zip(outs)
                    .map(|(i, o)| Ok((text(i)?, text(o)?)))
                    .collect::<Result<_, DatasetError>>()?
            }
            _ => return Err(bad()),
        };
        Ok(pairs
            .into_iter()
            .enumerate()
            .map(|(i, (input, output))| TestCase::io_pair(format!("{prefix}{}", i + 1), input, output))
            .collect())
    }

    fn difficulty(&self) -> Result<Option<String>, DatasetError> {
        match self.first(&["difficulty_tag", "difficulty"]) {
            Some((_, Value::String(s))) => Ok(Some(s.clone())),
            Some((_, Value::Number(n))) => Ok(Some(n.to_string())),
            Some((f, _)) => Err(self.err(f, "expected a string or number")),
            None => Ok(None),
        }
    }
}

/// Drops hidden tests that duplicate a sample, keeping the sets disjoint.
fn without_samples(id: &str, samples: &[TestCase], hidden: Vec<TestCase>) -> Vec<TestCase> {
    let keys: HashSet<String> = samples.iter().map(TestCase::content_key).collect();
    let before = hidden.len();
    let kept: Vec<TestCase> = hidden
        .into_iter()
        .filter(|t| !keys.contains(&t.content_key()))
        .collect();
    if kept.len() != before {
        log::warn!("{id}: dropped {} hidden test(s) duplicating a sample", before - kept.len());
    }
    kept
}

fn assertions(list: Vec<String>, prefix: &str) -> Vec<TestCase> {
    list.into_iter()
        .enumerate()
        .map(|(i, t)| TestCase::assertion(format!("{prefix}{}", i + 1), t))
        .collect()
}

/// Turns `>>> entry(...)` lines followed by an expected-value line into
/// assertions. Examples whose expected value spans several lines are
/// skipped.
pub fn doctest_samples(prompt: &str, entry_point: &str) -> Vec<TestCase> {
    let lines: Vec<&str> = prompt.lines().map(str::trim).collect();
    let mut out = Vec::new();
    let call_prefix = format!("{entry_point}(");
    for (i, l) in lines.iter().enumerate() {
        let Some(expr) = l.strip_prefix(">>>").map(str::trim) else {
            continue;
        };
        if !expr.starts_with(&call_prefix) {
            continue;
        }
        let Some(expected) = lines.get(i + 1).filter(|n| !n.is_empty() && !n.starts_with(">>>")) else {
            continue;
        };
        let multi = lines
            .get(i + 2)
            .is_some_and(|n| !n.is_empty() && !n.starts_with(">>>") && !n.starts_with("\"\"\""));
        if multi {
            continue;
        }
        out.push(TestCase::assertion(
            format!("sample{}", out.len() + 1),
            format!("assert {expr} == {expected}"),
        ));
    }
    out
}

fn humaneval(r: &Record) -> Result<Problem, DatasetError> {
    let id = r.id(&["task_id", "id"])?;
    let prompt = r.string(&["prompt"])?;
    let entry_point = r.string(&["entry_point"])?;
    let sample_io = match r.strings(&["sample_io", "sample_tests"])? {
        Some(list) => assertions(list, "sample"),
        None => doctest_samples(&prompt, &entry_point),
    };
    let hidden = match r.strings(&["test_case_list"])? {
        Some(list) => assertions(list, "hidden"),
        None => {
            let test = r.string(&["test"])?;
            vec![TestCase::assertion(
                "check",
                format!("{}\n\ncheck({entry_point})\n", test.trim_end()),
            )]
        }
    };
    let hidden_tests = without_samples(&id, &sample_io, hidden);
    Ok(Problem {
        id,
        description: prompt,
        exec_mode: ExecMode::FunctionCall,
        entry_point: Some(entry_point),
        sample_io,
        hidden_tests,
        source_dataset: r
            .opt_string(&["source_dataset"])?
            .unwrap_or_else(|| "humaneval".into()),
        difficulty_tag: r.difficulty()?,
    })
}

/// Name of the function called by the first `assert name(` in `tests`.
fn called_function(tests: &[String]) -> Option<String> {
    tests.iter().find_map(|t| {
        let rest = t.trim_start().strip_prefix("assert")?.trim_start();
        let rest = rest.strip_prefix('(').unwrap_or(rest).trim_start();
        let rest = rest.strip_prefix("not ").unwrap_or(rest).trim_start();
        let name: String = rest
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        (!name.is_empty() && rest[name.len()..].starts_with('(')).then_some(name)
    })
}

/// MBPP records load with every test hidden and no sample; the sample is
/// split off afterwards by [`extract_mbpp_sample_io`].
fn mbpp(r: &Record) -> Result<Problem, DatasetError> {
    let id = r.id(&["task_id", "id"])?;
    let text = r.string(&["text", "prompt", "description"])?;
    let base = r
        .strings(&["test_list"])?
        .ok_or_else(|| r.err("test_list", "missing"))?;
    let extended = r
        .strings(&["test_case_list", "et_test_list", "challenge_test_list"])?
        .unwrap_or_default();
    let mut pool: Vec<String> = Vec::new();
    let mut keys = HashSet::new();
    for t in base.iter().chain(&extended) {
        if keys.insert(crate::domain::normalize_ws(t)) {
            pool.push(t.clone());
        }
    }
    let entry_point = match r.opt_string(&["entry_point"])? {
        Some(e) => e,
        None => called_function(&pool)
            .ok_or_else(|| r.err("test_list", "cannot find the function under test"))?,
    };
    let setup = r.opt_string(&["test_setup_code"])?.filter(|s| !s.trim().is_empty());
    let pool = match setup {
        Some(s) => pool.into_iter().map(|t| format!("{s}\n{t}")).collect(),
        None => pool,
    };
    Ok(Problem {
        id,
        description: text,
        exec_mode: ExecMode::FunctionCall,
        entry_point: Some(entry_point),
        sample_io: Vec::new(),
        hidden_tests: assertions(pool, "test"),
        source_dataset: r
            .opt_string(&["source_dataset"])?
            .unwrap_or_else(|| "mbpp".into()),
        difficulty_tag: r.difficulty()?,
    })
}

fn contest(r: &Record) -> Result<Problem, DatasetError> {
    let id = r.id(&["id", "problem_id", "task_id", "name", "src_uid"])?;
    let description = r.string(&["description", "question", "problem", "prompt"])?;
    let sample_io = r.io_pairs(&["sample_io", "public_tests", "sample_tests"], "sample")?;
    let hidden = r.io_pairs(&["hidden_tests", "private_tests", "tests"], "hidden")?;
    let hidden_tests = without_samples(&id, &sample_io, hidden);
    Ok(Problem {
        id,
        description,
        exec_mode: ExecMode::StdinStdout,
        entry_point: None,
        sample_io,
        hidden_tests,
        source_dataset: r
            .opt_string(&["source_dataset", "source"])?
            .unwrap_or_else(|| "contest".into()),
        difficulty_tag: r.difficulty()?,
    })
}

/// Writes problems in the normalized format, one per line.
pub fn write_jsonl<'a>(
    problems: impl IntoIterator<Item = &'a Problem>,
    mut out: impl Write,
) -> io::Result<()> {
    for p in problems {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(problems: &[Problem]) -> String {
    let mut buf = Vec::new();
    write_jsonl(problems, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Moves one test, drawn uniformly from the problem's pool (current
/// samples plus hidden tests), into `sample_io`; the rest become hidden.
/// The draw is seeded by `seed` and the problem id, so a given seed always
/// picks the same test for the same problem.
pub fn extract_mbpp_sample_io(problem: &Problem, seed: u64) -> Result<Problem, DatasetError> {
    let mut pool: Vec<TestCase> = problem
        .sample_io
        .iter()
        .chain(&problem.hidden_tests)
        .cloned()
        .collect();
    if pool.len() < 2 {
        return Err(DatasetError::InsufficientTests {
            id: problem.id.clone(),
            found: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&problem.id));
    let pick = rng.random_range(0..pool.len());
    let sample = pool.remove(pick);
    let key = sample.content_key();
    // textual duplicates of the sample would break disjointness
    pool.retain(|t| t.content_key() != key);
    Ok(Problem {
        sample_io: vec![sample],
        hidden_tests: pool,
        ..problem.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HE: &str = r#"{"task_id": "HumanEval/0", "prompt": "def add(a, b):\n    \"\"\"Add.\n    >>> add(1, 2)\n    3\n    >>> add(2, 2)\n    4\n    \"\"\"\n", "entry_point": "add", "canonical_solution": "    return a + b\n", "test": "def check(candidate):\n    assert candidate(1, 1) == 2\n"}
{"task_id": "HumanEval/1", "prompt": "def neg(x):\n    \"\"\"Negate.\"\"\"\n", "entry_point": "neg", "test": "def check(candidate):\n    assert candidate(1) == -1\n"}
"#;

    #[test]
    fn humaneval_two_lines() {
        let ps = parse_dataset(HE, Format::HumanEvalJsonl).unwrap();
        assert_eq!(ps.len(), 2);
        assert!(ps.iter().all(|p| p.exec_mode == ExecMode::FunctionCall));
        assert_eq!(ps[0].entry_point.as_deref(), Some("add"));
        let samples: Vec<_> = ps[0].sample_io.iter().map(|t| t.content_key()).collect();
        assert_eq!(samples, vec!["A|assert add(1, 2) == 3", "A|assert add(2, 2) == 4"]);
        assert!(ps[1].sample_io.is_empty());
        let check = ps[1].hidden_tests[0].content_key();
        assert!(check.ends_with("check(neg)"));
    }

    #[test]
    fn humaneval_et_list_minus_samples() {
        let line = r#"{"task_id": "t", "prompt": "p", "entry_point": "f", "test": "", "sample_io": ["assert f(1) == 1"], "test_case_list": ["assert f(1)  == 1", "assert f(2) == 4"]}"#;
        let p = &parse_dataset(line, Format::HumanEvalJsonl).unwrap()[0];
        assert_eq!(p.hidden_tests.len(), 1);
        assert_eq!(p.hidden_tests[0].content_key(), "A|assert f(2) == 4");
    }

    #[test]
    fn duplicate_task_id_rejected() {
        let text = format!("{}\n{}", HE.lines().next().unwrap(), HE.lines().next().unwrap());
        let e = parse_dataset(&text, Format::HumanEvalJsonl).unwrap_err();
        assert!(matches!(e, DatasetError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn bad_json_reports_line() {
        let text = format!("{}\n\n{{oops", HE.lines().next().unwrap());
        let e = parse_dataset(&text, Format::HumanEvalJsonl).unwrap_err();
        assert!(matches!(e, DatasetError::Parse { line: 3, .. }));
    }

    #[test]
    fn missing_field_names_it() {
        let e = parse_dataset(r#"{"task_id": "x", "prompt": "p"}"#, Format::HumanEvalJsonl).unwrap_err();
        match e {
            DatasetError::Schema { field, line, .. } => assert_eq!((field.as_str(), line), ("entry_point", 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contest_empty_expected_output_accepted() {
        let line = r#"{"id": 7, "description": "d", "public_tests": {"input": ["1\n"], "output": [""]}, "private_tests": [{"input": "2\n", "output": "4\n"}], "difficulty": "interview"}"#;
        let p = &parse_dataset(line, Format::ContestJsonl).unwrap()[0];
        assert_eq!(p.id, "7");
        assert_eq!(p.exec_mode, ExecMode::StdinStdout);
        assert_eq!(p.sample_io, vec![TestCase::io_pair("sample1", "1\n", "")]);
        assert_eq!(p.difficulty_tag.as_deref(), Some("interview"));
    }

    #[test]
    fn contest_overlap_is_dropped_from_hidden() {
        let line = r#"{"id": "a", "description": "d", "sample_io": [{"input": "1", "output": "2"}], "hidden_tests": [{"input": "1", "output": "2"}, {"input": "3", "output": "4"}]}"#;
        let p = &parse_dataset(line, Format::ContestJsonl).unwrap()[0];
        assert_eq!(p.hidden_tests.len(), 1);
    }

    #[test]
    fn mbpp_record_and_extraction() {
        let line = r#"{"task_id": 11, "text": "Remove first and last occurrence of a char.", "code": "def remove_Occ(s,ch): pass", "test_list": ["assert remove_Occ(\"hello\",\"l\") == \"heo\"", "assert remove_Occ(\"abcda\",\"a\") == \"bcd\"", "assert remove_Occ(\"PHP\",\"P\") == \"H\""], "test_setup_code": "", "challenge_test_list": []}"#;
        let p = &parse_dataset(line, Format::MbppJsonl).unwrap()[0];
        assert_eq!(p.id, "11");
        assert_eq!(p.entry_point.as_deref(), Some("remove_Occ"));
        assert_eq!((p.sample_io.len(), p.hidden_tests.len()), (0, 3));
        let a = extract_mbpp_sample_io(p, 42).unwrap();
        let b = extract_mbpp_sample_io(p, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.sample_io.len(), a.hidden_tests.len()), (1, 2));
        assert!(validate_problem(&a).is_empty());
    }

    #[test]
    fn extraction_needs_two_tests() {
        let p = Problem {
            id: "m".into(),
            description: "d".into(),
            exec_mode: ExecMode::FunctionCall,
            entry_point: Some("f".into()),
            sample_io: vec![],
            hidden_tests: vec![TestCase::assertion("t1", "assert f() == 1")],
            source_dataset: "mbpp".into(),
            difficulty_tag: None,
        };
        assert!(matches!(
            extract_mbpp_sample_io(&p, 1),
            Err(DatasetError::InsufficientTests { found: 1, .. })
        ));
    }

    #[test]
    fn called_function_forms() {
        let t = |s: &str| called_function(&[s.to_string()]);
        assert_eq!(t("assert foo(1) == 2").as_deref(), Some("foo"));
        assert_eq!(t("assert not is_x(3)").as_deref(), Some("is_x"));
        assert_eq!(t("assert (bar(1)) == 1").as_deref(), Some("bar"));
        assert_eq!(t("assert x == 1"), None);
    }

    #[test]
    fn format_names() {
        assert_eq!(Format::parse("HumanEval"), Some(Format::HumanEvalJsonl));
        assert_eq!(Format::parse("mbpp-et"), Some(Format::MbppJsonl));
        assert_eq!(Format::parse("code_contests"), Some(Format::ContestJsonl));
        assert_eq!(Format::parse("csv"), None);
    }

    fn test_case(fc: bool) -> impl Strategy<Value = TestCase> {
        let text = "[a-z0-9 =()\n]{1,12}";
        if fc {
            text.prop_map(|t| TestCase::assertion("x", format!("assert {t}"))).boxed()
        } else {
            ("[a-z0-9]{1,4}[ \n]{0,2}", "[a-z0-9 \n]{0,8}")
                .prop_map(|(i, o)| TestCase::io_pair("x", i, o))
                .boxed()
        }
    }

    fn problem() -> impl Strategy<Value = Problem> {
        any::<bool>().prop_flat_map(|fc| {
            (
                "[a-z]{1,6}",
                "\\PC{0,30}",
                prop::collection::vec(test_case(fc), 0..3),
                prop::collection::vec(test_case(fc), 0..4),
                prop::option::of("[a-z]{1,8}"),
            )
                .prop_map(move |(id, description, s, h, difficulty_tag)| {
                    let label = |p: &str, v: Vec<TestCase>| {
                        v.into_iter()
                            .enumerate()
                            .map(|(i, mut t)| {
                                t.label = format!("{p}{i}");
                                t
                            })
                            .collect::<Vec<_>>()
                    };
                    let sample_io = label("s", s);
                    let hidden_tests = without_samples("", &sample_io, label("h", h));
                    Problem {
                        id,
                        description,
                        exec_mode: if fc { ExecMode::FunctionCall } else { ExecMode::StdinStdout },
                        entry_point: fc.then(|| "f".to_string()),
                        sample_io,
                        hidden_tests,
                        source_dataset: "prop".into(),
                        difficulty_tag,
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn normalized_round_trip(ps in prop::collection::vec(problem(), 0..5)) {
            let mut seen = HashSet::new();
            let ps: Vec<Problem> = ps.into_iter().filter(|p| seen.insert(p.id.clone())).collect();
            let text = to_jsonl(&ps);
            prop_assert!(text.is_empty() || text.ends_with('\n'));
            let back = parse_dataset(&text, Format::Normalized).unwrap();
            prop_assert_eq!(back, ps);
        }

        #[test]
        fn extraction_splits_pool(hidden in prop::collection::vec("[a-z0-9]{1,6}", 2..10), seed in any::<u64>()) {
            let mut uniq = HashSet::new();
            let hidden: Vec<String> = hidden.into_iter().filter(|h| uniq.insert(h.clone())).collect();
            prop_assume!(hidden.len() >= 2);
            let p = Problem {
                id: "p".into(),
                description: "d".into(),
                exec_mode: ExecMode::FunctionCall,
                entry_point: Some("f".into()),
                sample_io: vec![],
                hidden_tests: hidden.iter().enumerate()
                    .map(|(i, h)| TestCase::assertion(format!("t{i}"), format!("assert f('{h}')")))
                    .collect(),
                source_dataset: "mbpp".into(),
                difficulty_tag: None,
            };
            let a = extract_mbpp_sample_io(&p, seed).unwrap();
            prop_assert_eq!(&a, &extract_mbpp_sample_io(&p, seed).unwrap());
            prop_assert_eq!(a.sample_io.len() + a.hidden_tests.len(), hidden.len());
            prop_assert!(validate_problem(&a).is_empty());
        }
    }
}
