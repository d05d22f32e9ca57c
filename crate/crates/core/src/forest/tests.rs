use super::*;

const CASE_STUDY: &str = include_str!("../../tests/fixtures/forest_casestudy.txt");

fn case_study() -> Forest {
    parse_forest(CASE_STUDY, Mode::Action).expect("fixture parses")
}

fn node_at<'a>(forest: &'a Forest, state: &str, labels: &[&str]) -> &'a Node {
    let mut children = &forest.state(state).unwrap().children;
    let mut found = None;
    for l in labels {
        let n = children.iter().find(|c| c.label.text() == *l).unwrap();
        children = &n.children;
        found = Some(n);
    }
    found.unwrap()
}

#[test]
fn parse_path_examples() {
    assert_eq!(
        parse_path("in_kitchen -> go east -> go east").unwrap(),
        TodoPath::new("in_kitchen", &["go east", "go east"])
    );
    assert_eq!(
        parse_path("added_oil -> drive car").unwrap(),
        TodoPath::new("added_oil", &["drive car"])
    );
    assert!(matches!(
        parse_path("init_state"),
        Err(ForestError::Rejected(PathVerdict::Malformed(_)))
    ));
    assert!(matches!(
        parse_path("init_state ->  -> look"),
        Err(ForestError::Rejected(PathVerdict::Malformed(_)))
    ));
}

#[test]
fn case_study_renders_byte_for_byte() {
    let forest = case_study();
    let expected = format!("{}\n", CASE_STUDY.trim_end());
    assert_eq!(render_forest(&forest), expected);
    assert_eq!(forest.states.len(), 3);
    assert_eq!(
        forest.state("in_kitchen").unwrap().origin,
        Some(Origin {
            state: INIT_STATE.into(),
            steps: vec!["go north".into()],
        })
    );
    assert_eq!(forest.state("in_street").unwrap().origin, None);
}

#[test]
fn validate_against_case_study() {
    let forest = case_study();
    let p = |s: &str| parse_path(s).unwrap();
    assert_eq!(
        forest.validate_path(&p("garage_state -> look"), 10),
        PathVerdict::NonexistentState
    );
    assert_eq!(
        forest.validate_path(&p("in_kitchen -> examine cookbook"), 10),
        PathVerdict::Redundant
    );
    assert_eq!(
        forest.validate_path(&p("in_kitchen -> go east -> open sliding patio door -> go north"), 10),
        PathVerdict::Ok(1)
    );
    assert_eq!(
        forest.validate_path(&p("in_kitchen -> go east -> open sliding patio door -> go north"), 2),
        PathVerdict::TooLong(2)
    );
}

#[test]
fn explored_prefix_splits_at_first_new_step() {
    let forest = case_study();
    let path = parse_path("in_kitchen -> go east -> open sliding patio door -> go north").unwrap();
    let (at, rest) = forest.explored_prefix(&path).unwrap();
    assert_eq!(forest.labels_of(&at).unwrap(), vec!["go east".to_string()]);
    assert_eq!(rest.len(), 2);

    let all_new = parse_path("in_street -> open sliding door -> go east").unwrap();
    let (at, rest) = forest.explored_prefix(&all_new).unwrap();
    assert!(at.is_root());
    assert_eq!(rest, all_new.steps);

    let done = parse_path("init_state -> examine sofa -> inventory").unwrap();
    let (at, rest) = forest.explored_prefix(&done).unwrap();
    assert_eq!(at.path.len(), 2);
    assert!(rest.is_empty());

    assert!(forest.explored_prefix(&parse_path("nowhere -> look").unwrap()).is_err());
}

#[test]
fn ensure_record_and_idempotence() {
    let mut forest = Forest::new(Mode::Action, "start");
    assert!(forest.open_todos().is_empty());
    let path = parse_path("init_state -> go east -> go north").unwrap();
    assert_eq!(forest.validate_path(&path, 5), PathVerdict::Ok(0));
    let refs = forest.ensure_path(&path).unwrap();
    assert_eq!(refs.len(), 2);
    assert_eq!(forest.node_count(), 2);
    assert_eq!(forest.open_todos(), vec![path.clone()]);

    // same path again while still Todo returns the same refs, creates nothing
    assert_eq!(forest.validate_path(&path, 5), PathVerdict::Ok(2));
    assert_eq!(forest.ensure_path(&path).unwrap(), refs);
    assert_eq!(forest.node_count(), 2);

    forest.record_outcome(&refs[0], "You go east.", false, None, None).unwrap();
    forest.record_outcome(&refs[1], "You can't go that way.", true, None, None).unwrap();
    assert!(matches!(
        forest.record_outcome(&refs[1], "again", false, None, None),
        Err(ForestError::AlreadyResolved)
    ));
    assert_eq!(
        forest.node(&refs[1]).unwrap().status,
        Status::Failed("action failed: You can't go that way.".into())
    );
    assert_eq!(forest.validate_path(&path, 5), PathVerdict::Redundant);
    assert!(matches!(
        forest.ensure_path(&path),
        Err(ForestError::Rejected(PathVerdict::Redundant))
    ));
    assert!(forest.open_todos().is_empty());

    // failed branches may be extended
    let behind_failure = parse_path("init_state -> go east -> go north -> look").unwrap();
    assert_eq!(forest.ensure_path(&behind_failure).unwrap().len(), 3);
    assert_eq!(forest.open_todos(), vec![behind_failure]);
}

#[test]
fn plain_failure_key_result() {
    let mut forest = Forest::new(Mode::Action, "start");
    let refs = forest.ensure_path(&parse_path("init_state -> fly").unwrap()).unwrap();
    forest.record_outcome(&refs[0], "", true, None, None).unwrap();
    assert_eq!(forest.node(&refs[0]).unwrap().status, Status::Failed(FAILED_RESULT.into()));
    assert!(matches!(
        forest.record_outcome(&refs[0], "", true, None, None),
        Err(ForestError::AlreadyResolved)
    ));
}

#[test]
fn promote_and_render_marker() {
    let mut forest = Forest::new(Mode::Action, "You wake up.");
    let path = parse_path("init_state -> open door -> go north").unwrap();
    let refs = forest.ensure_path(&path).unwrap();
    forest.record_outcome(&refs[0], "You open the door.", false, None, None).unwrap();
    forest
        .record_outcome(&refs[1], "Agent's location: Kitchen.", false, None, Some(SnapshotId("s1".into())))
        .unwrap();
    let name = forest.promote(&refs[1], "in_kitchen", "Agent is in the Kitchen.").unwrap();
    assert_eq!(name, "in_kitchen");
    let state = forest.state("in_kitchen").unwrap();
    assert_eq!(state.checkpoint, Some(SnapshotId("s1".into())));
    assert_eq!(
        state.origin,
        Some(Origin {
            state: INIT_STATE.into(),
            steps: vec!["open door".into(), "go north".into()],
        })
    );
    let text = render_forest(&forest);
    assert!(text.contains("    - go north: Agent's location: Kitchen. [reach in_kitchen]\n"));
    assert!(text.ends_with("\n- in_kitchen: Agent is in the Kitchen.\n"));

    assert!(matches!(
        forest.promote(&refs[0], "in_kitchen", "dup"),
        Err(ForestError::DuplicateState(_))
    ));
    assert!(matches!(
        forest.promote(&refs[1], "again", "twice"),
        Err(ForestError::NotPromotable)
    ));

    let step = forest
        .ensure_path(&parse_path("in_kitchen -> eat table").unwrap())
        .unwrap();
    forest.record_outcome(&step[0], "no", true, None, None).unwrap();
    assert!(matches!(
        forest.promote(&step[0], "ate_table", "x"),
        Err(ForestError::NotPromotable)
    ));
    assert_eq!(
        forest.replay_actions(&step[0]).unwrap(),
        vec!["open door", "go north", "eat table"]
    );
}

#[test]
fn agent_mode_labels() {
    let mut forest = Forest::new(Mode::Agent, "Agent is in a room.");
    let refs = forest
        .ensure_path(&parse_path("init_state -> go to door").unwrap())
        .unwrap();
    forest
        .record_outcome(&refs[0], "Agent stands at the door.", false, None, None)
        .unwrap();
    let text = render_forest(&forest);
    assert!(text.contains("  - agent(\"go to door\"): Agent stands at the door.\n"));
    assert_eq!(parse_forest(&text, Mode::Agent).unwrap(), forest);
    assert!(parse_forest(&text, Mode::Action).is_err());
}

#[test]
fn key_results_are_truncated() {
    let mut forest = Forest::new(Mode::Action, "s");
    let refs = forest.ensure_path(&parse_path("init_state -> look").unwrap()).unwrap();
    forest.record_outcome(&refs[0], &"x".repeat(900), false, None, None).unwrap();
    let key = forest.node(&refs[0]).unwrap().status.key_result().unwrap().to_string();
    assert_eq!(key.chars().count(), MAX_KEY_RESULT_CHARS);
    assert!(key.ends_with(TRUNCATION_MARKER));
}

#[test]
fn json_envelope() {
    let forest = case_study();
    let json = forest.to_json().unwrap();
    assert_eq!(Forest::from_json(&json).unwrap(), forest);
    let bumped = json.replacen("\"version\": 1", "\"version\": 7", 1);
    assert!(matches!(Forest::from_json(&bumped), Err(ForestError::Version(7))));
}

#[test]
fn ten_thousand_nodes_round_trip() {
    let mut forest = Forest::new(Mode::Action, "root");
    for i in 0..2000 {
        let path = TodoPath {
            start_state: INIT_STATE.into(),
            steps: (0..5).map(|d| format!("act {i} {d}")).collect(),
        };
        for (d, r) in forest.ensure_path(&path).unwrap().iter().enumerate() {
            forest
                .record_outcome(r, &format!("r{d}"), false, Some(format!("t{i}")), None)
                .unwrap();
        }
    }
    assert_eq!(forest.node_count(), 10_000);
    assert_eq!(Forest::from_json(&forest.to_json().unwrap()).unwrap(), forest);
    let text = render_forest(&forest);
    assert_eq!(parse_forest(&text, Mode::Action).unwrap(), forest.without_runtime_refs());
}

#[test]
fn case_study_node_lookup() {
    let forest = case_study();
    let n = node_at(&forest, "init_state", &["look", "examine sofa", "inventory"]);
    assert_eq!(n.status, Status::Done("You are carrying nothing.".into()));
}
