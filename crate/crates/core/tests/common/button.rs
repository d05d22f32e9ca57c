//! A one-button environment and scripted agents for benchmark tests.

use ilcl_core::env::{EnvCapabilities, EnvError, Environment, Observation, SnapshotId, TaskGoal, TaskSpec};
use ilcl_core::eval::{run_benchmark, BenchmarkReport, BenchmarkSettings, Condition, EpisodeKey, EvalInstance};
use ilcl_core::llm::{Cassette, Player, Provider, TemplateId};

/// Reaches its goal once the agent presses the button.
#[derive(Default)]
pub struct ButtonEnv {
    pressed: bool,
}

impl Environment for ButtonEnv {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        self.pressed = false;
        Ok(Observation::new("A room with a button."))
    }
    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        self.pressed |= action == "press button";
        Ok(Observation::new("Time passes."))
    }
    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        Err(EnvError::Unsupported("snapshot"))
    }
    fn restore(&mut self, _: &SnapshotId) -> Result<(), EnvError> {
        Err(EnvError::Unsupported("restore"))
    }
    fn capabilities(&self) -> EnvCapabilities {
        EnvCapabilities::default()
    }
    fn fingerprint(&self) -> String {
        "button".into()
    }
    fn goal_reached(&self, _: &TaskGoal) -> bool {
        self.pressed
    }
}

pub fn task(id: &str) -> TaskSpec {
    TaskSpec {
        id: id.into(),
        goal: "Press the button.".into(),
        check: TaskGoal::Reach { location: "anywhere".into() },
        optimal_steps: 1,
    }
}

pub fn button_instance(id: &str, tasks: &[&str]) -> EvalInstance {
    EvalInstance {
        id: id.into(),
        make_env: Box::new(|| Ok(Box::new(ButtonEnv::default()) as Box<dyn Environment>)),
        tasks: tasks.iter().map(|t| task(t)).collect(),
        context: Some("#### Observations\n\n- Room:\n  - objects: button\n".into()),
    }
}

/// A provider that presses the button on step `n`, or never.
pub fn presser(n: Option<u32>, cap: u32) -> Box<dyn Provider> {
    let wait = "<action>wait</action>";
    let press = "<action>press button</action>";
    let answers: Vec<(TemplateId, &str)> = match n {
        Some(n) => (1..=n)
            .map(|i| (TemplateId::ActorSubagent, if i == n { press } else { wait }))
            .collect(),
        None => (0..cap).map(|_| (TemplateId::ActorSubagent, wait)).collect(),
    };
    Box::new(Player::new(Cassette::scripted(answers), false))
}

/// The two-task, two-repeat run behind the golden report files.
pub fn golden_benchmark(jobs: usize) -> BenchmarkReport {
    let schedule = |key: &EpisodeKey| -> Option<u32> {
        match (key.task.as_str(), key.condition, key.repeat) {
            ("a", Condition::WithoutContext, 0) => Some(15),
            ("a", Condition::WithoutContext, 1) => None,
            ("b", Condition::WithoutContext, 0) => Some(5),
            ("b", Condition::WithoutContext, 1) => Some(12),
            ("a", Condition::WithContext, 0) => Some(3),
            ("a", Condition::WithContext, 1) => Some(4),
            ("b", Condition::WithContext, 0) => Some(8),
            ("b", Condition::WithContext, 1) => Some(19),
            other => panic!("unexpected episode {other:?}"),
        }
    };
    let settings = BenchmarkSettings {
        budgets: vec![10, 20],
        repeats: 2,
        jobs,
        ..BenchmarkSettings::default()
    };
    run_benchmark(&[button_instance("i", &["a", "b"])], &settings, &move |k: &EpisodeKey| {
        Ok(presser(schedule(k), 20))
    })
    .unwrap()
}
