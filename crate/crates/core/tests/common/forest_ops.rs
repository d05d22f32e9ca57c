use ilcl_core::forest::{Forest, Mode, Node, PathVerdict, Status, TodoPath};
use proptest::prelude::*;

pub const ACTIONS: [&str; 6] = ["go north", "go east", "look", "take key", "open red door", "examine box"];
pub const RESULTS: [&str; 4] = [
    "Agent's location: Hall.",
    "You take the key.",
    "The box is empty.",
    "You see nothing special.",
];

#[derive(Debug, Clone)]
pub struct Op {
    state: usize,
    steps: Vec<usize>,
    outcomes: Vec<Option<(usize, bool)>>,
    promote: bool,
}

pub fn op() -> impl Strategy<Value = Op> {
    (
        any::<usize>(),
        prop::collection::vec(0..ACTIONS.len(), 1..4),
        prop::collection::vec(prop::option::weighted(0.8, (0..RESULTS.len(), prop::bool::weighted(0.2))), 3),
        prop::bool::weighted(0.3),
    )
        .prop_map(|(state, steps, outcomes, promote)| Op {
            state,
            steps,
            outcomes,
            promote,
        })
}

pub fn todo_count(nodes: &[Node], under_todo: bool, top: &mut usize, leaves: &mut usize) {
    for n in nodes {
        let todo = n.status.is_todo();
        if todo && !under_todo {
            *top += 1;
        }
        if todo && n.children.is_empty() {
            *leaves += 1;
        }
        todo_count(&n.children, under_todo || todo, top, leaves);
    }
}

fn statuses(forest: &Forest) -> Vec<(String, Vec<String>, Status)> {
    let mut out = Vec::new();
    for r in forest.find_done(|_| true) {
        let labels = forest.labels_of(&r).unwrap();
        out.push((r.state.clone(), labels, forest.node(&r).unwrap().status.clone()));
    }
    out
}

/// Applies `ops` and checks the per-step invariants along the way.
pub fn build(ops: &[Op]) -> Result<Forest, TestCaseError> {
    let mut forest = Forest::new(Mode::Action, "Agent is at the start.");
    let mut promoted = 0;
    for op in ops {
        let names: Vec<String> = forest.states.keys().cloned().collect();
        let path = TodoPath {
            start_state: names[op.state % names.len()].clone(),
            steps: op.steps.iter().map(|&i| ACTIONS[i].to_string()).collect(),
        };
        let before_nodes = forest.node_count();
        let before_done = statuses(&forest);
        match forest.validate_path(&path, 8) {
            PathVerdict::Ok(k) => {
                let refs = forest.ensure_path(&path).unwrap();
                prop_assert_eq!(forest.node_count(), before_nodes + path.steps.len() - k);
                for (r, outcome) in refs.iter().zip(&op.outcomes) {
                    let Some((result, failed)) = outcome else { break };
                    if forest.node(r).unwrap().status.is_todo() {
                        forest.record_outcome(r, RESULTS[*result], *failed, None, None).unwrap();
                    }
                }
                let last = refs.last().unwrap();
                if op.promote && matches!(forest.node(last).unwrap().status, Status::Done(_)) {
                    let name = format!("state_{promoted}");
                    if forest.node(last).unwrap().promoted_to.is_none() {
                        forest.promote(last, &name, "Agent is somewhere new.").unwrap();
                        promoted += 1;
                    }
                }
            }
            PathVerdict::Redundant => {
                prop_assert!(forest.ensure_path(&path).is_err());
            }
            other => prop_assert!(false, "unexpected verdict {:?}", other),
        }
        prop_assert!(forest.node_count() >= before_nodes);
        let after = statuses(&forest);
        for entry in &before_done {
            prop_assert!(after.contains(entry), "resolved node changed: {:?}", entry);
        }
    }
    Ok(forest)
}

