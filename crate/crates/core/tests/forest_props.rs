mod common;

use common::forest_ops::{build, op, todo_count};
use ilcl_core::forest::{parse_forest, render_forest, Forest, Mode, PathVerdict, INIT_STATE};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn render_parse_round_trip(ops in prop::collection::vec(op(), 0..25)) {
        let forest = build(&ops)?;
        let text = render_forest(&forest);
        let parsed = parse_forest(&text, Mode::Action).unwrap();
        prop_assert_eq!(&parsed, &forest.without_runtime_refs());
        prop_assert_eq!(render_forest(&parsed), text);
    }

    #[test]
    fn json_round_trip(ops in prop::collection::vec(op(), 0..25)) {
        let forest = build(&ops)?;
        prop_assert_eq!(Forest::from_json(&forest.to_json().unwrap()).unwrap(), forest);
    }

    #[test]
    fn every_state_replays_from_init(ops in prop::collection::vec(op(), 0..25)) {
        let forest = build(&ops)?;
        for state in forest.states.values() {
            let mut hops = 0;
            let mut at = state;
            while let Some(origin) = &at.origin {
                at = forest.state(&origin.state).unwrap();
                hops += 1;
                prop_assert!(hops <= forest.states.len());
            }
            prop_assert_eq!(&at.name, INIT_STATE);
        }
    }

    #[test]
    fn open_todos_match_todo_leaves(ops in prop::collection::vec(op(), 0..25)) {
        let forest = build(&ops)?;
        let (mut top, mut leaves) = (0, 0);
        for s in forest.states.values() {
            todo_count(&s.children, false, &mut top, &mut leaves);
        }
        let open = forest.open_todos();
        prop_assert_eq!(open.len(), leaves);
        prop_assert!(top <= leaves);
        for p in &open {
            prop_assert!(matches!(forest.validate_path(p, usize::MAX), PathVerdict::Ok(k) if k == p.steps.len()));
        }
    }
}
