use indexmap::IndexMap;

use super::{
    is_state_name, Forest, ForestError, Label, Mode, Node, Origin, StateNode, Status, FAILED_RESULT,
    MAX_KEY_RESULT_CHARS, TODO_MARKER, TRUNCATION_MARKER,
};
use crate::text::truncate_chars;

/// Prompt-ready text: one block per state, children indented two spaces per
/// level, blank line between states.
pub fn render_forest(forest: &Forest) -> String {
    let mut out = String::new();
    for (i, state) in forest.states.values().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("- {}: {}\n", state.name, state.summary));
        for child in &state.children {
            render_node(child, 1, &mut out);
        }
    }
    out
}

fn render_label(label: &Label) -> String {
    match label {
        Label::Action(t) => t.clone(),
        Label::AgentTask(t) => format!("agent({})", serde_json::Value::String(t.clone())),
    }
}

fn render_node(node: &Node, depth: usize, out: &mut String) {
    let result = match &node.status {
        Status::Todo => TODO_MARKER.to_string(),
        Status::Done(k) | Status::Failed(k) => truncate_chars(k, MAX_KEY_RESULT_CHARS, TRUNCATION_MARKER),
    };
    out.push_str(&"  ".repeat(depth));
    out.push_str("- ");
    out.push_str(&render_label(&node.label));
    out.push(':');
    if !result.is_empty() {
        out.push(' ');
        out.push_str(&result);
    }
    if let Some(target) = &node.promoted_to {
        out.push_str(&format!(" [reach {target}]"));
    }
    out.push('\n');
    for child in &node.children {
        render_node(child, depth + 1, out);
    }
}

fn split_label(body: &str, line: usize) -> Result<(Label, &str), ForestError> {
    let err = |m: &str| ForestError::Parse {
        line,
        message: m.to_string(),
    };
    if let Some(rest) = body.strip_prefix("agent(") {
        let mut de = serde_json::Deserializer::from_str(rest).into_iter::<String>();
        let task = match de.next() {
            Some(Ok(t)) => t,
            _ => return Err(err("agent label needs a quoted task")),
        };
        let after = &rest[de.byte_offset()..];
        let after = after.strip_prefix("):").ok_or_else(|| err("agent label must end with '):'"))?;
        return Ok((Label::AgentTask(task), after.strip_prefix(' ').unwrap_or(after)));
    }
    if let Some(i) = body.find(": ") {
        return Ok((Label::Action(body[..i].to_string()), &body[i + 2..]));
    }
    match body.strip_suffix(':') {
        Some(label) => Ok((Label::Action(label.to_string()), "")),
        None => Err(err("expected 'label: result'")),
    }
}

fn split_promotion(result: &str) -> (&str, Option<String>) {
    if let Some(stripped) = result.strip_suffix(']') {
        if let Some(i) = stripped.rfind("[reach ") {
            let name = &stripped[i + "[reach ".len()..];
            if is_state_name(name) {
                let key = stripped[..i].strip_suffix(' ').unwrap_or(&stripped[..i]);
                return (key, Some(name.to_string()));
            }
        }
    }
    (result, None)
}

/// Inverse of [`render_forest`]. Lines that are just `...` are skipped so
/// abridged logs still parse. Origins of promoted states are recovered from
/// the `[reach name]` markers.
pub fn parse_forest(text: &str, mode: Mode) -> Result<Forest, ForestError> {
    let mut states: IndexMap<String, StateNode> = IndexMap::new();
    let mut current: Option<String> = None;
    // stack[d] = index of the open node at depth d+1 under the current state
    let mut stack: Vec<usize> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |m: String| ForestError::Parse {
            line: line_no,
            message: m,
        };
        if raw.trim().is_empty() || raw.trim() == "..." {
            continue;
        }
        let indent = raw.len() - raw.trim_start_matches(' ').len();
        if indent % 2 != 0 {
            return Err(err(format!("indent of {indent} spaces is not a multiple of 2")));
        }
        let depth = indent / 2;
        let body = raw[indent..]
            .strip_prefix("- ")
            .ok_or_else(|| err("expected a '- ' bullet".into()))?
            .trim_end();
        if depth == 0 {
            let (name, summary) = body
                .split_once(':')
                .ok_or_else(|| err("expected 'state_name: summary'".into()))?;
            if !is_state_name(name) {
                return Err(err(format!("'{name}' is not a state name")));
            }
            if states.contains_key(name) {
                return Err(err(format!("duplicate state '{name}'")));
            }
            states.insert(
                name.to_string(),
                StateNode {
                    name: name.to_string(),
                    summary: summary.trim_start().to_string(),
                    children: Vec::new(),
                    checkpoint: None,
                    origin: None,
                },
            );
            current = Some(name.to_string());
            stack.clear();
            continue;
        }
        let state_name = current.clone().ok_or_else(|| err("node before any state".into()))?;
        if depth > stack.len() + 1 {
            return Err(err("node is indented deeper than its parent allows".into()));
        }
        stack.truncate(depth - 1);
        let (label, result) = split_label(body, line_no)?;
        if mode == Mode::Action && matches!(label, Label::AgentTask(_)) {
            return Err(err("agent task in an action-mode forest".into()));
        }
        let label = match (mode, label) {
            (Mode::Agent, Label::Action(t)) => Label::AgentTask(t),
            (_, l) => l,
        };
        let (key, promoted_to) = split_promotion(result);
        let status = if key == TODO_MARKER {
            Status::Todo
        } else if key.starts_with(FAILED_RESULT) {
            Status::Failed(key.to_string())
        } else {
            Status::Done(key.to_string())
        };
        let state = states.get_mut(&state_name).expect("current state exists");
        let mut siblings = &mut state.children;
        for &i in &stack {
            siblings = &mut siblings[i].children;
        }
        if siblings.iter().any(|c| c.label.text() == label.text()) {
            return Err(err(format!("duplicate label '{}' under one parent", label.text())));
        }
        siblings.push(Node {
            label,
            status,
            children: Vec::new(),
            promoted_to,
            trajectory_ref: None,
            checkpoint: None,
        });
        stack.push(siblings.len() - 1);
    }
    if states.is_empty() {
        return Err(ForestError::Parse {
            line: 1,
            message: "no states".into(),
        });
    }
    let mut forest = Forest { mode, states };
    link_origins(&mut forest)?;
    Ok(forest)
}

fn link_origins(forest: &mut Forest) -> Result<(), ForestError> {
    let mut links: Vec<(String, Origin)> = Vec::new();
    for r in forest.find_done(|n| n.promoted_to.is_some()) {
        let target = forest.node(&r).and_then(|n| n.promoted_to.clone()).expect("filtered");
        let steps = forest.labels_of(&r).expect("ref from walk");
        links.push((
            target,
            Origin {
                state: r.state.clone(),
                steps,
            },
        ));
    }
    for (target, origin) in links {
        let pos_target = forest.states.get_index_of(&target);
        let pos_source = forest.states.get_index_of(&origin.state);
        match (pos_target, pos_source) {
            (Some(t), Some(s)) if s < t => {
                let state = &mut forest.states[t];
                if state.origin.is_some() {
                    return Err(ForestError::Parse {
                        line: 0,
                        message: format!("state '{target}' is reached from two nodes"),
                    });
                }
                state.origin = Some(origin);
            }
            _ => {
                return Err(ForestError::Parse {
                    line: 0,
                    message: format!("promotion marker names '{target}', which is not a later state"),
                })
            }
        }
    }
    Ok(())
}
