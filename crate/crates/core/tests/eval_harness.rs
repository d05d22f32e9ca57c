mod common;

use std::sync::{Arc, Mutex};

use common::button::{button_instance, golden_benchmark, presser};

use ilcl_core::env::{Environment, RoomParams, RoomWorld};
use ilcl_core::eval::{
    episode_background, format_report_md, mean_stderr, react_episode, report_csv, run_benchmark, write_report,
    BenchmarkSettings, Condition, EpisodeKey, EpisodeOutcome, EvalInstance,
};
use ilcl_core::explore::{run_exploration, ExploreConfig};
use ilcl_core::llm::oracle::OracleProvider;
use ilcl_core::llm::{CallConfig, CompletionRequest, LlmError, Provider};
use ilcl_core::schema::{builtin, parse_schema, render_document};
use proptest::prelude::*;

#[test]
fn episodes_times_budgets_give_rows() {
    let instances: Vec<EvalInstance> = (1..=3).map(|i| button_instance(&format!("b{i}"), &["t"])).collect();
    let settings = BenchmarkSettings {
        budgets: vec![20, 10],
        ..BenchmarkSettings::default()
    };
    let report = run_benchmark(&instances, &settings, &|_: &EpisodeKey| Ok(presser(Some(3), 20))).unwrap();
    assert_eq!(report.episodes.len(), 6);
    assert_eq!(report.rows.len(), 12);
    assert_eq!(report.budgets, vec![10, 20]);
    assert!(report.rows.iter().all(|r| r.success && r.steps == 3));
}

#[test]
fn instances_without_a_document_run_only_without_context() {
    let mut inst = button_instance("b", &["t"]);
    inst.context = None;
    let report =
        run_benchmark(&[inst], &BenchmarkSettings::default(), &|_: &EpisodeKey| Ok(presser(Some(1), 50))).unwrap();
    assert!(report.rows.iter().all(|r| r.condition == Condition::WithoutContext));
}

#[test]
fn report_matches_golden_files() {
    let report = golden_benchmark(3);
    assert_eq!(report_csv(&report), include_str!("fixtures/golden/report.csv"));
    assert_eq!(format_report_md(&report), include_str!("fixtures/golden/report.md"));

    let dir = tempfile::tempdir().unwrap();
    write_report(dir.path(), &report).unwrap();
    let written = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(written, include_str!("fixtures/golden/report.csv"));
}

#[test]
fn standard_error_of_three_samples() {
    // sd of {0, 50, 100} is 50; 50 / sqrt(3) = 28.867513459481287
    let (mean, se) = mean_stderr(&[0.0, 50.0, 100.0]);
    assert_eq!(mean, 50.0);
    assert!((se - 28.867_513_459_481_287).abs() < 1e-12);
    assert_eq!(mean_stderr(&[42.0]), (42.0, 0.0));
    assert_eq!(mean_stderr(&[]), (0.0, 0.0));
}

proptest! {
    #[test]
    fn truncation_is_monotone_in_the_budget(
        steps in 0u32..60,
        win in prop::option::of(0u32..60),
        b1 in 0u32..80,
        b2 in 0u32..80,
    ) {
        let steps_to_success = win.map(|w| w.min(steps));
        let outcome = EpisodeOutcome {
            task_id: "t".into(),
            condition: Condition::WithoutContext,
            success: steps_to_success.is_some(),
            steps,
            steps_to_success,
            failure_reason: None,
            transcript: Vec::new(),
        };
        let (lo, hi) = (b1.min(b2), b1.max(b2));
        let (ok_lo, steps_lo) = outcome.at_budget(lo);
        let (ok_hi, steps_hi) = outcome.at_budget(hi);
        prop_assert!(!ok_lo || ok_hi);
        prop_assert!(steps_lo <= lo && steps_hi <= hi);
        if ok_lo {
            prop_assert_eq!(steps_lo, steps_hi);
        }
    }
}

/// Keeps every prompt and always looks around.
struct Capture(Arc<Mutex<Vec<CompletionRequest>>>);

impl Provider for Capture {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError> {
        self.0.lock().unwrap().push(req.clone());
        Ok("<action>look</action>".into())
    }
}

#[test]
fn the_document_is_the_only_difference_between_conditions() {
    let (mut env, truth) = RoomWorld::generate(2, RoomParams::default()).unwrap();
    let doc = "#### Observations\n\n- Hall:\n  - objects: Nothing\n";
    let t = &truth.tasks[0];
    let run = |context: Option<&str>, env: &mut RoomWorld| {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let mut p = Capture(seen.clone());
        react_episode(env, t, &mut p, context, 4, &CallConfig::default(), 40).unwrap();
        let prompts = seen.lock().unwrap().clone();
        prompts
    };
    let without = run(None, &mut env);
    let with = run(Some(doc), &mut env);
    assert_eq!(without.len(), with.len());
    let plain_bg = env.background();
    let with_bg = episode_background(&plain_bg, Some(doc));
    for (a, b) in without.iter().zip(&with) {
        let mut ba = a.bindings.clone();
        let mut bb = b.bindings.clone();
        assert_eq!(ba.remove("background").unwrap(), plain_bg);
        assert_eq!(bb.remove("background").unwrap(), with_bg);
        assert_eq!(ba, bb);
        assert_eq!(b.rendered_prompt.replacen(&with_bg, &plain_bg, 1), a.rendered_prompt);
    }
}

#[test]
fn a_budget_below_the_optimum_never_succeeds() {
    let schema = parse_schema("roomworld", builtin::ROOMWORLD).unwrap();
    let (mut env, truth) = RoomWorld::generate(3, RoomParams::default()).unwrap();
    let mut config = ExploreConfig::default();
    config.budget.max_env_steps = 2000;
    config.budget.max_iterations = 500;
    let explored = run_exploration(&mut env, &schema, &mut OracleProvider::new(), &config, Some(&truth)).unwrap();
    let doc = render_document(&explored.document, &schema).unwrap();
    for t in truth.tasks.iter().filter(|t| t.optimal_steps > 0) {
        let mut llm = OracleProvider::new();
        let short = t.optimal_steps - 1;
        let out = react_episode(&mut env, t, &mut llm, Some(&doc), short, &CallConfig::default(), 40).unwrap();
        assert!(!out.success, "{} succeeded in {} < {} steps", t.id, out.steps, t.optimal_steps);
        assert!(out.steps <= short);
    }
}
