//! Python bindings. Test cases cross the boundary as plain values: a `str`
//! is an assertion, an `(input, expected_output)` tuple is an I/O pair.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyTuple;

use plancode_core::datasets::{self, Format};
use plancode_core::domain::{
    self, AgentToggles, ExecMode, PipelineMode, Plan, Preset, TestCase, TestKind,
};
use plancode_core::eval::{self, Attempt, Estimator, ProblemResult};
use plancode_core::executor::{
    self, CodeExecutor, ComparePolicy, ExecLimits, ExecutorConfig, ProcessExecutor,
};
use plancode_core::llm::{self, LiveConfig, LlmBackend};
use plancode_core::script::MarkerExecutor;
use plancode_core::traversal::{self, SolveError};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

#[derive(FromPyObject)]
enum TestArg {
    Assertion(String),
    Io(String, String),
}

fn to_tests(items: Vec<TestArg>, prefix: &str) -> Vec<TestCase> {
    items
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let label = format!("{prefix}{}", i + 1);
            match t {
                TestArg::Assertion(text) => TestCase::assertion(label, text),
                TestArg::Io(input, out) => TestCase::io_pair(label, input, out),
            }
        })
        .collect()
}

fn test_to_py<'py>(py: Python<'py>, t: &TestCase) -> PyResult<Bound<'py, PyAny>> {
    match &t.kind {
        TestKind::Assertion { text } => Ok(text.into_pyobject(py)?.into_any()),
        TestKind::IoPair {
            input,
            expected_output,
        } => Ok(PyTuple::new(py, [input, expected_output])?.into_any()),
    }
}

fn parse_mode(s: &str) -> PyResult<ExecMode> {
    match s {
        "function_call" => Ok(ExecMode::FunctionCall),
        "stdin_stdout" => Ok(ExecMode::StdinStdout),
        other => Err(value_err(format!(
            "exec_mode must be 'function_call' or 'stdin_stdout', got {other:?}"
        ))),
    }
}

fn mode_name(m: ExecMode) -> &'static str {
    match m {
        ExecMode::FunctionCall => "function_call",
        ExecMode::StdinStdout => "stdin_stdout",
    }
}

#[pyclass(name = "Problem", module = "plancode", from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: domain::Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (id, description, exec_mode="stdin_stdout", sample_io=vec![], hidden_tests=vec![], entry_point=None, source_dataset="python".to_string(), difficulty_tag=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        id: String,
        description: String,
        exec_mode: &str,
        sample_io: Vec<TestArg>,
        hidden_tests: Vec<TestArg>,
        entry_point: Option<String>,
        source_dataset: String,
        difficulty_tag: Option<String>,
    ) -> PyResult<Self> {
        Ok(PyProblem {
            inner: domain::Problem {
                id,
                description,
                exec_mode: parse_mode(exec_mode)?,
                entry_point,
                sample_io: to_tests(sample_io, "sample"),
                hidden_tests: to_tests(hidden_tests, "hidden"),
                source_dataset,
                difficulty_tag,
            },
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(|inner| PyProblem { inner })
            .map_err(value_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("problem serializes")
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn description(&self) -> &str {
        &self.inner.description
    }

    #[getter]
    fn exec_mode(&self) -> &'static str {
        mode_name(self.inner.exec_mode)
    }

    #[getter]
    fn entry_point(&self) -> Option<&str> {
        self.inner.entry_point.as_deref()
    }

    #[getter]
    fn difficulty_tag(&self) -> Option<&str> {
        self.inner.difficulty_tag.as_deref()
    }

    #[getter]
    fn sample_io<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.inner.sample_io.iter().map(|t| test_to_py(py, t)).collect()
    }

    #[getter]
    fn hidden_tests<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.inner.hidden_tests.iter().map(|t| test_to_py(py, t)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(id={:?}, exec_mode={:?}, samples={}, hidden={})",
            self.inner.id,
            mode_name(self.inner.exec_mode),
            self.inner.sample_io.len(),
            self.inner.hidden_tests.len()
        )
    }
}

#[pyclass(name = "RunConfig", module = "plancode", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: domain::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (k=3, t=3, temperature=0.0, timeout_ms=10_000, mode="mapcoder", disable=vec![]))]
    fn new(
        k: usize,
        t: usize,
        temperature: f64,
        timeout_ms: u64,
        mode: &str,
        disable: Vec<String>,
    ) -> PyResult<Self> {
        let mode = match mode {
            "mapcoder" => PipelineMode::MapCoder,
            "direct" => PipelineMode::Direct,
            other => return Err(value_err(format!("unknown mode {other:?}"))),
        };
        let mut toggles = AgentToggles::default();
        for a in &disable {
            match a.as_str() {
                "retrieval" => toggles.retrieval = false,
                "planning" => toggles.planning = false,
                "debugging" => toggles.debugging = false,
                other => return Err(value_err(format!("unknown agent {other:?}"))),
            }
        }
        let inner = domain::RunConfig {
            k,
            t,
            temperature,
            per_test_timeout_ms: timeout_ms,
            agent_toggles: toggles,
            mode,
        };
        inner.validate().map_err(value_err)?;
        Ok(PyRunConfig { inner })
    }

    /// `humaneval` (k = t = 5) or `standard` (k = t = 3).
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let p = Preset::parse(name).ok_or_else(|| value_err(format!("unknown preset {name:?}")))?;
        Ok(PyRunConfig {
            inner: domain::RunConfig::preset(p),
        })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.temperature
    }

    #[getter]
    fn timeout_ms(&self) -> u64 {
        self.inner.per_test_timeout_ms
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(k={}, t={})", self.inner.k, self.inner.t)
    }
}

/// Replays canned responses in order.
#[pyclass(name = "ScriptedBackend", module = "plancode", frozen)]
struct PyScriptedBackend {
    inner: Arc<llm::ScriptedBackend>,
}

#[pymethods]
impl PyScriptedBackend {
    #[new]
    fn new(responses: Vec<String>) -> Self {
        PyScriptedBackend {
            inner: Arc::new(llm::ScriptedBackend::new(responses)),
        }
    }

    #[getter]
    fn call_count(&self) -> usize {
        self.inner.call_count()
    }

    #[getter]
    fn remaining(&self) -> usize {
        self.inner.remaining()
    }

    fn prompts(&self) -> Vec<String> {
        self.inner.prompts()
    }
}

/// OpenAI-compatible endpoint; the key comes from `PLANCODE_API_KEY`.
#[pyclass(name = "LiveBackend", module = "plancode", frozen)]
struct PyLiveBackend {
    inner: Arc<llm::RateLimited<llm::OpenAiBackend>>,
}

#[pymethods]
impl PyLiveBackend {
    #[new]
    #[pyo3(signature = (model=None, base_url=None, rpm=60))]
    fn new(model: Option<String>, base_url: Option<String>, rpm: u32) -> PyResult<Self> {
        let mut cfg = LiveConfig::default();
        if let Some(m) = model {
            cfg.model_name = m;
        }
        if let Some(u) = base_url {
            cfg.base_url = u;
        }
        let client = llm::OpenAiBackend::from_env(cfg).map_err(value_err)?;
        Ok(PyLiveBackend {
            inner: Arc::new(llm::RateLimited::new(client, rpm, 1)),
        })
    }
}

#[pyclass(name = "SolveOutcome", module = "plancode", frozen)]
struct PySolveOutcome {
    inner: domain::SolveOutcome,
}

#[pymethods]
impl PySolveOutcome {
    #[getter]
    fn final_code(&self) -> &str {
        &self.inner.final_code.source
    }

    #[getter]
    fn solved_on_samples(&self) -> bool {
        self.inner.solved_on_samples
    }

    #[getter]
    fn plans_tried(&self) -> usize {
        self.inner.plans_tried
    }

    #[getter]
    fn debug_iterations_used(&self) -> usize {
        self.inner.debug_iterations_used
    }

    #[getter]
    fn api_calls(&self) -> u64 {
        self.inner.usage.api_calls
    }

    /// Agent names in call order.
    #[getter]
    fn agents(&self) -> Vec<String> {
        self.inner.transcript.iter().map(|c| c.agent.to_string()).collect()
    }

    #[getter]
    fn plan_order(&self) -> Vec<usize> {
        self.inner.trace.ordered_plan_indices.clone()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("outcome serializes")
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveOutcome(solved_on_samples={}, plans_tried={}, debug_iterations_used={})",
            self.inner.solved_on_samples, self.inner.plans_tried, self.inner.debug_iterations_used
        )
    }
}

fn backend_of(obj: &Bound<'_, PyAny>) -> PyResult<Arc<dyn LlmBackend>> {
    if let Ok(b) = obj.cast::<PyScriptedBackend>() {
        return Ok(b.get().inner.clone());
    }
    if let Ok(b) = obj.cast::<PyLiveBackend>() {
        return Ok(b.get().inner.clone());
    }
    Err(value_err("backend must be a ScriptedBackend or LiveBackend"))
}

/// Runs the pipeline on one problem. With `pass_marker` set, candidates are
/// judged by whether their source contains the marker instead of being
/// executed.
#[pyfunction]
#[pyo3(signature = (problem, config, backend, pass_marker=None, shim=None))]
fn solve(
    py: Python<'_>,
    problem: PyProblem,
    config: PyRunConfig,
    backend: &Bound<'_, PyAny>,
    pass_marker: Option<String>,
    shim: Option<Vec<String>>,
) -> PyResult<PySolveOutcome> {
    let backend = backend_of(backend)?;
    let result = py.detach(move || {
        let executor: Box<dyn CodeExecutor> = match pass_marker {
            Some(m) => Box::new(MarkerExecutor::new(m)),
            None => Box::new(process_executor(shim)),
        };
        traversal::solve(&problem.inner, &config.inner, backend.as_ref(), executor.as_ref())
    });
    match result {
        Ok(inner) => Ok(PySolveOutcome { inner }),
        Err(SolveError::InvalidInput(m)) => Err(value_err(m)),
        Err(e) => Err(runtime_err(format!("{} failed: {e}", e.phase()))),
    }
}

fn process_executor(shim: Option<Vec<String>>) -> ProcessExecutor {
    let mut cfg = ExecutorConfig::default();
    if let Some(s) = shim {
        cfg.shim_command = s;
    }
    ProcessExecutor::new(cfg)
}

/// Pass@k over a matrix of per-attempt hidden-test outcomes, one row per
/// problem.
#[pyfunction]
#[pyo3(signature = (matrix, k, estimator="plain"))]
fn pass_at_k(matrix: Vec<Vec<bool>>, k: usize, estimator: &str) -> PyResult<f64> {
    let est = Estimator::parse(estimator).ok_or_else(|| value_err("estimator is 'plain' or 'unbiased'"))?;
    let results: Vec<ProblemResult> = matrix
        .into_iter()
        .enumerate()
        .map(|(i, row)| ProblemResult {
            problem_id: i.to_string(),
            difficulty_tag: None,
            attempts: row
                .into_iter()
                .enumerate()
                .map(|(j, s)| Attempt {
                    attempt_index: j + 1,
                    solved_hidden: s,
                    outcome: None,
                    error: None,
                    warnings: vec![],
                })
                .collect(),
        })
        .collect();
    eval::score(&results, k, est).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (expected, actual, trim_trailing_whitespace=true, collapse_blank_lines=false, float_tolerance=None))]
fn compare_output(
    expected: &str,
    actual: &str,
    trim_trailing_whitespace: bool,
    collapse_blank_lines: bool,
    float_tolerance: Option<f64>,
) -> bool {
    let policy = ComparePolicy {
        trim_trailing_whitespace,
        collapse_internal_runs_of_blank_lines: collapse_blank_lines,
        float_tolerance,
    };
    executor::compare_output(expected, actual, &policy)
}

/// Attempt order for plans with the given confidences, as indices.
#[pyfunction]
fn sort_plans(confidences: Vec<f64>) -> Vec<usize> {
    let plans: Vec<Plan> = confidences
        .into_iter()
        .enumerate()
        .map(|(i, c)| Plan::new(vec![String::new()], c, i))
        .collect();
    traversal::sort_plans(&plans)
        .into_iter()
        .map(|p| p.origin_exemplar_index)
        .collect()
}

#[pyfunction]
fn validate_problem(problem: PyProblem) -> Vec<String> {
    domain::validate_problem(&problem.inner)
        .iter()
        .map(ToString::to_string)
        .collect()
}

#[pyfunction]
#[pyo3(signature = (path, format="normalized"))]
fn load_dataset(path: PathBuf, format: &str) -> PyResult<Vec<PyProblem>> {
    let fmt = Format::parse(format).ok_or_else(|| value_err(format!("unknown format {format:?}")))?;
    datasets::load_dataset(&path, fmt)
        .map(|ps| ps.into_iter().map(|inner| PyProblem { inner }).collect())
        .map_err(value_err)
}

#[pyfunction]
fn extract_mbpp_sample_io(problem: PyProblem, seed: u64) -> PyResult<PyProblem> {
    datasets::extract_mbpp_sample_io(&problem.inner, seed)
        .map(|inner| PyProblem { inner })
        .map_err(value_err)
}

/// Executes `code` against `tests` and returns `(label, verdict, detail)`
/// per test.
#[pyfunction]
#[pyo3(signature = (code, tests, exec_mode="stdin_stdout", language="python", entry_point=None, timeout_ms=10_000, shim=None))]
#[allow(clippy::too_many_arguments)]
fn run_candidate(
    py: Python<'_>,
    code: String,
    tests: Vec<TestArg>,
    exec_mode: &str,
    language: &str,
    entry_point: Option<String>,
    timeout_ms: u64,
    shim: Option<Vec<String>>,
) -> PyResult<Vec<(String, String, String)>> {
    let mode = parse_mode(exec_mode)?;
    let candidate = domain::CandidateCode::new(code, language, domain::Producer::Coding)
        .ok_or_else(|| value_err("code is empty"))?;
    let tests = to_tests(tests, "t");
    let report = py
        .detach(move || {
            process_executor(shim).run_candidate(
                &candidate,
                &tests,
                mode,
                entry_point.as_deref(),
                &ExecLimits::with_timeout_ms(timeout_ms),
                &ComparePolicy::default(),
            )
        })
        .map_err(runtime_err)?;
    Ok(report
        .verdicts
        .into_iter()
        .map(|v| (v.label, v.verdict.to_string(), v.detail))
        .collect())
}

#[pymodule]
fn plancode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyScriptedBackend>()?;
    m.add_class::<PyLiveBackend>()?;
    m.add_class::<PySolveOutcome>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(pass_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(compare_output, m)?)?;
    m.add_function(wrap_pyfunction!(sort_plans, m)?)?;
    m.add_function(wrap_pyfunction!(validate_problem, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(extract_mbpp_sample_io, m)?)?;
    m.add_function(wrap_pyfunction!(run_candidate, m)?)?;
    Ok(())
}
