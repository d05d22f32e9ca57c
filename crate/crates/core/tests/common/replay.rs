//! Executes a path prefix and then its extension on RoomWorld.

use ilcl_core::env::{GroundTruth, RoomParams, RoomWorld, StepCounter};
use ilcl_core::explore::{execute_path, ActorSettings, Session, Trajectory};
use ilcl_core::forest::{Mode, TodoPath, INIT_STATE};
use ilcl_core::llm::oracle::OracleProvider;
use proptest::prelude::*;

pub fn vocabulary(truth: &GroundTruth) -> Vec<String> {
    let mut out: Vec<String> = ["go north", "go east", "go south", "go west", "look", "inventory"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for o in &truth.objects {
        let name = o.name.to_lowercase();
        out.push(format!("take {name}"));
        out.push(format!("examine {name}"));
    }
    for e in &truth.edges {
        if let Some(d) = &e.door {
            out.push(format!("open {}", d.to_lowercase()));
        }
    }
    out.sort();
    out.dedup();
    out
}

pub struct Outcome {
    pub first: Trajectory,
    pub second: Trajectory,
    pub second_steps: u64,
}

/// Executes `prefix`, then `prefix + suffix`, and reports the env steps the
/// second call cost.
pub fn run_twice(seed: u64, prefix: &[String], suffix: &[String], snapshots: bool) -> Outcome {
    let (world, _) = RoomWorld::generate(seed, RoomParams::default()).unwrap();
    let mut env = StepCounter::new(world);
    let settings = ActorSettings::default();
    let mut llm = OracleProvider::new();
    let mut session = Session::start(&mut env, Mode::Action, 10_000, snapshots).unwrap();
    let p1 = TodoPath {
        start_state: INIT_STATE.into(),
        steps: prefix.to_vec(),
    };
    let first = execute_path(&mut session, &p1, &mut llm, &settings).unwrap().trajectory;
    let before = session.steps_used();
    let mut p2 = p1.clone();
    p2.steps.extend_from_slice(suffix);
    let second = execute_path(&mut session, &p2, &mut llm, &settings).unwrap().trajectory;
    let second_steps = session.steps_used() - before;
    drop(session);
    assert_eq!(env.steps(), first.records.len() as u64 + second_steps);
    Outcome {
        first,
        second,
        second_steps,
    }
}

pub fn paths() -> impl Strategy<Value = (u64, Vec<String>, Vec<String>)> {
    (1u64..=5).prop_flat_map(|seed| {
        let (_, truth) = RoomWorld::generate(seed, RoomParams::default()).unwrap();
        let words = vocabulary(&truth);
        (
            Just(seed),
            prop::collection::vec(prop::sample::select(words.clone()), 1..5),
            prop::collection::vec(prop::sample::select(words), 1..4),
        )
    })
}

