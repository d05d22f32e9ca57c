use ilcl_core::env::{CraftWorld, RoomParams, RoomWorld, StepCounter, TaskGoal};
use ilcl_core::explore::{execute_path, run_exploration, ActorSettings, ExploreConfig, Session, StopReason};
use ilcl_core::forest::{Mode, Status, TodoPath, INIT_STATE};
use ilcl_core::llm::oracle::OracleProvider;
use ilcl_core::llm::{Cassette, Player, TemplateId};
use ilcl_core::schema::{builtin, parse_schema, render_document, validate_document};

fn generous() -> ExploreConfig {
    let mut config = ExploreConfig::default();
    config.budget.max_env_steps = 2000;
    config.budget.max_iterations = 500;
    config
}

#[test]
fn oracle_run_resolves_roomworld_gaps() {
    let schema = parse_schema("roomworld", builtin::ROOMWORLD).unwrap();
    let (mut env, truth) = RoomWorld::generate(1, RoomParams::default()).unwrap();
    let result = run_exploration(&mut env, &schema, &mut OracleProvider::new(), &generous(), Some(&truth)).unwrap();
    assert_eq!(result.stop_reason, StopReason::GapsResolved);
    assert!(validate_document(&result.document, &schema).is_empty());
    assert_eq!(result.document.unknown_count(), 0);
    assert!(result.forest.open_todos().is_empty());
    let last = result.metrics.last().unwrap();
    assert_eq!(last.env_steps, result.steps_used);
    assert_eq!(result.metrics[0].iteration, 0);
}

#[test]
fn zero_step_budget_stops_at_once() {
    let schema = parse_schema("roomworld", builtin::ROOMWORLD).unwrap();
    let (world, truth) = RoomWorld::generate(1, RoomParams::default()).unwrap();
    let mut env = StepCounter::new(world);
    let mut config = ExploreConfig::default();
    config.budget.max_env_steps = 0;
    let mut llm = OracleProvider::new();
    let result = run_exploration(&mut env, &schema, &mut llm, &config, Some(&truth)).unwrap();
    assert_eq!(result.stop_reason, StopReason::BudgetExhausted);
    assert_eq!(result.steps_used, 0);
    assert_eq!(env.steps(), 0);
    assert_eq!(llm.calls(), 0);
    assert!(result.document.entities.is_empty());
    assert!(render_document(&result.document, &schema).is_ok());
}

const WOOD_LAYOUT: &str = "
...T
.@..
";

#[test]
fn scripted_subagent_collects_wood() {
    let mut env = CraftWorld::from_layout(WOOD_LAYOUT).unwrap();
    let actions = ["Move East", "Move East", "Move North", "Do", "finish"];
    let mut script: Vec<(TemplateId, String)> = actions
        .iter()
        .map(|a| (TemplateId::ActorSubagent, format!("<thought>Head for the tree.</thought>\n<action>{a}</action>")))
        .collect();
    script.push((TemplateId::KeyresultSummarize, "<key_result>Agent holds 1 wood.</key_result>".into()));
    let mut llm = Player::new(Cassette::scripted(script), false);

    let mut session = Session::start(&mut env, Mode::Agent, 100, true).unwrap();
    let path = TodoPath::new(INIT_STATE, &["collect 1 wood"]);
    let exec = execute_path(&mut session, &path, &mut llm, &ActorSettings::default()).unwrap();
    let records = &exec.trajectory.records;
    assert_eq!(records.len(), 4);
    assert!(records[3].observation.text.contains("wood"));
    assert_eq!(exec.resolved[0].1.text, "Agent holds 1 wood.");
    assert!(session.env().goal_reached(&TaskGoal::Collect {
        item: "wood".into(),
        count: 1
    }));
    assert_eq!(llm.remaining().len(), 0);
}

#[test]
fn subagent_without_steps_fails_its_node() {
    let mut env = CraftWorld::from_layout(WOOD_LAYOUT).unwrap();
    let mut llm = Player::new(Cassette::default(), false);
    let settings = ActorSettings {
        subagent_step_budget: 0,
        agent_key_results: ilcl_core::explore::KeyResultSource::Rule,
        ..ActorSettings::default()
    };
    let mut session = Session::start(&mut env, Mode::Agent, 100, true).unwrap();
    let path = TodoPath::new(INIT_STATE, &["collect 1 wood"]);
    let exec = execute_path(&mut session, &path, &mut llm, &settings).unwrap();
    assert!(exec.trajectory.records.is_empty());
    let node = session.forest.node(&exec.resolved[0].0).unwrap();
    assert!(matches!(node.status, Status::Failed(_)), "{:?}", node.status);
}

#[test]
fn gaps_only_grow_when_a_new_room_is_found() {
    let schema = parse_schema("roomworld", builtin::ROOMWORLD).unwrap();
    for seed in 1..=5 {
        let (mut env, truth) = RoomWorld::generate(seed, RoomParams::default()).unwrap();
        let result = run_exploration(&mut env, &schema, &mut OracleProvider::new(), &generous(), Some(&truth)).unwrap();
        for pair in result.metrics.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (ca, cb) = (a.coverage.unwrap(), b.coverage.unwrap());
            assert!(cb.locations_found >= ca.locations_found, "seed {seed}: {pair:?}");
            if b.unknown_count > a.unknown_count {
                assert!(cb.locations_found > ca.locations_found, "seed {seed}: {pair:?}");
            }
        }
        assert_eq!(result.metrics.last().unwrap().unknown_count, 0);
    }
}
