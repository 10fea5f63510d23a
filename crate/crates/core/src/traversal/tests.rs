use super::*;
use crate::domain::{AgentKind, ExecMode, Producer, TestCase};
use crate::llm::make_scripted;
use crate::script::{code_response, generic_retrieval, planning_response, MarkerExecutor};
use proptest::prelude::*;

fn problem() -> Problem {
    Problem {
        id: "p1".into(),
        description: "Read n and print n squared.".into(),
        exec_mode: ExecMode::StdinStdout,
        entry_point: None,
        sample_io: vec![TestCase::io_pair("s1", "3\n", "9\n")],
        hidden_tests: vec![TestCase::io_pair("h1", "4\n", "16\n")],
        source_dataset: "unit".into(),
        difficulty_tag: None,
    }
}

fn cfg(k: usize, t: usize) -> RunConfig {
    RunConfig {
        k,
        t,
        ..RunConfig::default()
    }
}

fn agents_seq(out: &SolveOutcome) -> Vec<AgentKind> {
    out.transcript.iter().map(|c| c.agent).collect()
}

use AgentKind::{Coding as C, Debugging as D, Planning as P, Retrieval as R};

#[test]
fn debug_fix_on_most_confident_plan_wins() {
    let backend = make_scripted([
        generic_retrieval(2),
        planning_response(&["a"], 90.0),
        planning_response(&["b"], 40.0),
        code_response("print('wrong')"),
        code_response("print(int(input())**2)  # PASS"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let out = solve(&problem(), &cfg(2, 1), &backend, &exec).unwrap();
    assert!(out.solved_on_samples);
    assert_eq!(out.plans_tried, 1);
    assert_eq!(out.debug_iterations_used, 1);
    assert_eq!(agents_seq(&out), vec![R, P, P, C, D]);
    assert_eq!(out.final_code.produced_by, Producer::Debugging(1));
    assert_eq!(exec.invocations(), 2);
    assert_eq!(backend.remaining(), 0);
    assert_eq!(out.trace.ordered_plan_indices, vec![0, 1]);
    assert!(out.trace.is_consistent());
}

#[test]
fn all_failing_exhausts_budget_and_returns_last_candidate() {
    let (k, t) = (3, 5);
    let mut script = vec![generic_retrieval(k)];
    for c in [10.0, 80.0, 50.0] {
        script.push(planning_response(&["x"], c));
    }
    let mut n = 0;
    for _ in 0..k {
        for _ in 0..=t {
            n += 1;
            script.push(code_response(&format!("print({n})")));
        }
    }
    let backend = make_scripted(script);
    let exec = MarkerExecutor::new("PASS");
    let out = solve(&problem(), &cfg(k, t), &backend, &exec).unwrap();
    assert_eq!(backend.call_count(), 22);
    assert_eq!(out.usage.api_calls, 22);
    assert!(!out.solved_on_samples);
    assert_eq!(out.plans_tried, 3);
    assert_eq!(out.debug_iterations_used, 15);
    // lowest confidence plan (origin 0) is tried last
    assert_eq!(out.trace.ordered_plan_indices, vec![1, 2, 0]);
    assert_eq!(out.final_code.source, "print(18)");
    assert_eq!(out.final_code.produced_by, Producer::Debugging(5));
    assert_eq!(exec.invocations(), 18);
    assert!(out.trace.is_consistent());
}

#[test]
fn direct_mode_is_one_call_and_untested() {
    let backend = make_scripted([code_response("print(1)  # PASS")]);
    let exec = MarkerExecutor::new("PASS");
    let c = RunConfig {
        mode: PipelineMode::Direct,
        ..cfg(3, 3)
    };
    let out = solve(&problem(), &c, &backend, &exec).unwrap();
    assert_eq!(backend.call_count(), 1);
    assert_eq!(exec.invocations(), 0);
    assert!(!out.solved_on_samples);
    assert_eq!(out.plans_tried, 0);
    assert_eq!(agents_seq(&out), vec![C]);
    assert!(backend.prompts()[0].contains("Read n and print n squared."));
}

#[test]
fn first_code_passing_skips_debugging_and_later_plans() {
    let backend = make_scripted([
        generic_retrieval(3),
        planning_response(&["a"], 20.0),
        planning_response(&["b"], 70.0),
        planning_response(&["c"], 70.0),
        code_response("# PASS"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let out = solve(&problem(), &cfg(3, 3), &backend, &exec).unwrap();
    assert!(out.solved_on_samples);
    assert_eq!(out.debug_iterations_used, 0);
    assert_eq!(out.trace.ordered_plan_indices, vec![1, 2, 0]);
    assert_eq!(out.trace.events[0].plan_index, 1);
    assert_eq!(backend.call_count(), 5);
}

#[test]
fn coding_prompt_carries_the_chosen_plan() {
    let backend = make_scripted([
        generic_retrieval(2),
        planning_response(&["low-plan-step"], 5.0),
        planning_response(&["high-plan-step"], 95.0),
        code_response("# PASS"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    solve(&problem(), &cfg(2, 0), &backend, &exec).unwrap();
    let coding = &backend.prompts()[3];
    assert!(coding.contains("high-plan-step"));
    assert!(!coding.contains("low-plan-step"));
}

#[test]
fn zero_samples_first_code_is_final() {
    let mut p = problem();
    p.sample_io.clear();
    let backend = make_scripted([
        generic_retrieval(2),
        planning_response(&["a"], 60.0),
        planning_response(&["b"], 50.0),
        code_response("print('unchecked')"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let out = solve(&p, &cfg(2, 2), &backend, &exec).unwrap();
    assert_eq!(exec.invocations(), 0);
    assert!(!out.solved_on_samples);
    assert_eq!(out.plans_tried, 1);
    assert_eq!(out.final_code.source, "print('unchecked')");
}

#[test]
fn debugging_disabled_means_no_debug_calls() {
    let backend = make_scripted([
        generic_retrieval(2),
        planning_response(&["a"], 60.0),
        planning_response(&["b"], 50.0),
        code_response("print(1)"),
        code_response("print(2)"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let mut c = cfg(2, 3);
    c.agent_toggles.debugging = false;
    let out = solve(&problem(), &c, &backend, &exec).unwrap();
    assert!(!agents_seq(&out).contains(&D));
    assert_eq!(out.plans_tried, 2);
    assert_eq!(out.final_code.source, "print(2)");
}

#[test]
fn retrieval_disabled_plans_without_exemplars() {
    let backend = make_scripted([
        planning_response(&["a"], 60.0),
        planning_response(&["b"], 70.0),
        code_response("# PASS"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let mut c = cfg(2, 1);
    c.agent_toggles.retrieval = false;
    let out = solve(&problem(), &c, &backend, &exec).unwrap();
    assert_eq!(agents_seq(&out), vec![P, P, C]);
    assert_eq!(out.trace.ordered_plan_indices, vec![1, 0]);
}

#[test]
fn planning_disabled_codes_k_times_without_plans() {
    let backend = make_scripted([code_response("print(1)"), code_response("# PASS")]);
    let exec = MarkerExecutor::new("PASS");
    let mut c = cfg(2, 0);
    c.agent_toggles.planning = false;
    let out = solve(&problem(), &c, &backend, &exec).unwrap();
    assert_eq!(agents_seq(&out), vec![C, C]);
    assert!(out.solved_on_samples);
    assert_eq!(out.plans_tried, 2);
}

#[test]
fn unparseable_coding_twice_skips_to_next_plan() {
    let backend = make_scripted([
        generic_retrieval(2),
        planning_response(&["a"], 90.0),
        planning_response(&["b"], 10.0),
        "no code here".to_string(),
        "still nothing".to_string(),
        code_response("# PASS"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let out = solve(&problem(), &cfg(2, 1), &backend, &exec).unwrap();
    assert!(out.solved_on_samples);
    assert_eq!(out.plans_tried, 2);
    assert!(out.transcript[4].parse_retry);
    assert_eq!(out.trace.events[0].plan_index, 1);
}

#[test]
fn parse_retry_recovers_within_the_same_call() {
    let backend = make_scripted([
        generic_retrieval(1),
        "confidence: high".to_string(),
        planning_response(&["a"], 50.0),
        code_response("# PASS"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let out = solve(&problem(), &cfg(1, 0), &backend, &exec).unwrap();
    assert!(out.solved_on_samples);
    assert_eq!(agents_seq(&out), vec![R, P, P, C]);
    assert!(backend.prompts()[2].contains("previous response could not be used"));
}

#[test]
fn every_path_unparseable_is_an_agent_error() {
    let backend = make_scripted([
        generic_retrieval(1),
        planning_response(&["a"], 50.0),
        "nope".to_string(),
        "nope".to_string(),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let err = solve(&problem(), &cfg(1, 1), &backend, &exec).unwrap_err();
    assert!(matches!(err, SolveError::Agent(AgentError::Parse { agent: AgentKind::Coding, .. })));
}

#[test]
fn all_planning_unparseable_is_an_agent_error() {
    let backend = make_scripted([generic_retrieval(1), "x".to_string(), "y".to_string()]);
    let exec = MarkerExecutor::new("PASS");
    let err = solve(&problem(), &cfg(1, 1), &backend, &exec).unwrap_err();
    assert_eq!(err.phase(), "agents");
}

#[test]
fn backend_failure_is_terminal() {
    // script runs out during the second plan's coding
    let backend = make_scripted([
        generic_retrieval(2),
        planning_response(&["a"], 90.0),
        planning_response(&["b"], 10.0),
        code_response("print(1)"),
    ]);
    let exec = MarkerExecutor::new("PASS");
    let err = solve(&problem(), &cfg(2, 0), &backend, &exec).unwrap_err();
    assert!(matches!(err, SolveError::Backend(BackendError::ScriptExhausted { .. })));
}

#[test]
fn invalid_inputs_rejected_before_any_call() {
    let backend = make_scripted(Vec::<String>::new());
    let exec = MarkerExecutor::new("PASS");
    let err = solve(&problem(), &cfg(0, 1), &backend, &exec).unwrap_err();
    assert!(matches!(err, SolveError::InvalidInput(_)));
    let mut p = problem();
    p.entry_point = Some("f".into());
    let err = solve(&p, &cfg(1, 1), &backend, &exec).unwrap_err();
    assert!(matches!(err, SolveError::InvalidInput(_)));
    assert_eq!(backend.call_count(), 0);
}

#[test]
fn same_script_same_outcome() {
    let run = || {
        let backend = make_scripted([
            generic_retrieval(2),
            planning_response(&["a"], 50.0),
            planning_response(&["b"], 50.0),
            code_response("print(1)"),
            code_response("print(2)"),
            code_response("print(3)"),
            code_response("print(4)  # PASS"),
        ]);
        let exec = MarkerExecutor::new("PASS");
        let out = solve(&problem(), &cfg(2, 1), &backend, &exec).unwrap();
        (out.final_code, out.trace, backend.prompts())
    };
    assert_eq!(run(), run());
}

fn plan(c: f64, i: usize) -> Plan {
    Plan::new(vec!["s".into()], c, i)
}

#[test]
fn sort_plans_examples() {
    let order = |ps: &[Plan]| -> Vec<usize> {
        sort_plans(ps).iter().map(|p| p.origin_exemplar_index).collect()
    };
    assert_eq!(order(&[plan(40.0, 0), plan(90.0, 1), plan(70.0, 2)]), vec![1, 2, 0]);
    assert_eq!(order(&[plan(50.0, 0), plan(50.0, 1), plan(50.0, 2)]), vec![0, 1, 2]);
    assert_eq!(order(&[plan(50.0, 2), plan(80.0, 1), plan(50.0, 0)]), vec![1, 0, 2]);
    assert!(sort_plans(&[]).is_empty());
}

proptest! {
    #[test]
    fn sort_plans_is_a_sorted_permutation(confs in prop::collection::vec(0u8..=100, 0..12)) {
        let plans: Vec<Plan> = confs.iter().enumerate().map(|(i, &c)| plan(f64::from(c), i)).collect();
        let sorted = sort_plans(&plans);
        prop_assert_eq!(sorted.len(), plans.len());
        let mut idx: Vec<usize> = sorted.iter().map(|p| p.origin_exemplar_index).collect();
        for w in sorted.windows(2) {
            prop_assert!(
                w[0].confidence > w[1].confidence
                    || (w[0].confidence == w[1].confidence
                        && w[0].origin_exemplar_index < w[1].origin_exemplar_index)
            );
        }
        idx.sort_unstable();
        prop_assert_eq!(idx, (0..plans.len()).collect::<Vec<_>>());
    }
}
