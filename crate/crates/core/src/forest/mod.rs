//! The TODO forest: shallow trees of explored action sequences, each rooted
//! at a named state with a short summary.

mod path;
mod render;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::env::SnapshotId;
use crate::text::{one_line, truncate_chars};

pub use path::{parse_path, PathVerdict, TodoPath, ARROW};
pub use render::{parse_forest, render_forest};

pub const INIT_STATE: &str = "init_state";
pub const TODO_MARKER: &str = "TODO";
pub const FAILED_RESULT: &str = "action failed";
pub const MAX_KEY_RESULT_CHARS: usize = 500;
pub const TRUNCATION_MARKER: &str = " [...]";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Action,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum Label {
    Action(String),
    AgentTask(String),
}

impl Label {
    pub fn for_mode(mode: Mode, text: &str) -> Label {
        match mode {
            Mode::Action => Label::Action(text.to_string()),
            Mode::Agent => Label::AgentTask(text.to_string()),
        }
    }

    pub fn text(&self) -> &str {
        match self {
            Label::Action(t) | Label::AgentTask(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "key_result", rename_all = "snake_case")]
pub enum Status {
    Todo,
    Done(String),
    Failed(String),
}

impl Status {
    pub fn is_todo(&self) -> bool {
        matches!(self, Status::Todo)
    }

    pub fn key_result(&self) -> Option<&str> {
        match self {
            Status::Todo => None,
            Status::Done(k) | Status::Failed(k) => Some(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub label: Label,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Node>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promoted_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<SnapshotId>,
}

impl Node {
    pub fn todo(label: Label) -> Self {
        Node {
            label,
            status: Status::Todo,
            children: Vec::new(),
            promoted_to: None,
            trajectory_ref: None,
            checkpoint: None,
        }
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(Node::count).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub state: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateNode {
    pub name: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Node>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<SnapshotId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

/// Address of a node: a state plus child indices from its root. An empty
/// `path` addresses the state root itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub state: String,
    pub path: Vec<usize>,
}

impl NodeRef {
    pub fn root(state: &str) -> Self {
        NodeRef {
            state: state.to_string(),
            path: Vec::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("path rejected: {0:?}")]
    Rejected(PathVerdict),
    #[error("no such node {0:?}")]
    NoSuchNode(NodeRef),
    #[error("node already resolved")]
    AlreadyResolved,
    #[error("only executed, successful nodes can be promoted")]
    NotPromotable,
    #[error("state '{0}' already exists")]
    DuplicateState(String),
    #[error("invalid state name '{0}'")]
    InvalidStateName(String),
    #[error("state summary is empty")]
    EmptySummary,
    #[error("invalid label '{0}'")]
    InvalidLabel(String),
    #[error("key result '{0}' is reserved")]
    ReservedKeyResult(String),
    #[error("forest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported forest format version {0}")]
    Version(u32),
    #[error("forest json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forest {
    pub mode: Mode,
    pub states: IndexMap<String, StateNode>,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: u32,
    forest: T,
}

pub fn is_state_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Normalizes a key result the way the forest stores it: one line, at most
/// [`MAX_KEY_RESULT_CHARS`] characters.
pub fn compact_key_result(text: &str) -> String {
    truncate_chars(&one_line(text), MAX_KEY_RESULT_CHARS, TRUNCATION_MARKER)
}

impl Forest {
    pub fn new(mode: Mode, init_summary: &str) -> Self {
        let mut states = IndexMap::new();
        states.insert(
            INIT_STATE.to_string(),
            StateNode {
                name: INIT_STATE.to_string(),
                summary: one_line(init_summary),
                children: Vec::new(),
                checkpoint: None,
                origin: None,
            },
        );
        Forest { mode, states }
    }

    pub fn state(&self, name: &str) -> Option<&StateNode> {
        self.states.get(name)
    }

    pub fn state_mut(&mut self, name: &str) -> Option<&mut StateNode> {
        self.states.get_mut(name)
    }

    pub fn node(&self, r: &NodeRef) -> Option<&Node> {
        let state = self.states.get(&r.state)?;
        let (first, rest) = r.path.split_first()?;
        let mut node = state.children.get(*first)?;
        for &i in rest {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    pub fn node_mut(&mut self, r: &NodeRef) -> Option<&mut Node> {
        let state = self.states.get_mut(&r.state)?;
        let (first, rest) = r.path.split_first()?;
        let mut node = state.children.get_mut(*first)?;
        for &i in rest {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// Step labels leading from the state root to `r`.
    pub fn labels_of(&self, r: &NodeRef) -> Option<Vec<String>> {
        let state = self.states.get(&r.state)?;
        let mut out = Vec::with_capacity(r.path.len());
        let mut children = &state.children;
        for &i in &r.path {
            let node = children.get(i)?;
            out.push(node.label.text().to_string());
            children = &node.children;
        }
        Some(out)
    }

    pub fn node_count(&self) -> usize {
        self.states
            .values()
            .map(|s| s.children.iter().map(Node::count).sum::<usize>())
            .sum()
    }

    /// Length of the longest prefix of `path.steps` already present as nodes.
    fn existing_prefix(&self, path: &TodoPath) -> Option<(usize, bool)> {
        let state = self.states.get(&path.start_state)?;
        let mut children = &state.children;
        let mut all_resolved = true;
        for (k, step) in path.steps.iter().enumerate() {
            match children.iter().find(|c| c.label.text() == step) {
                Some(node) => {
                    all_resolved &= !node.status.is_todo();
                    children = &node.children;
                }
                None => return Some((k, false)),
            }
        }
        Some((path.steps.len(), all_resolved))
    }

    /// Classifies a proposed path against the forest. The verdict encodes
    /// every outcome; this never fails.
    pub fn validate_path(&self, path: &TodoPath, max_len: usize) -> PathVerdict {
        if let Err(reason) = path.check() {
            return PathVerdict::Malformed(reason);
        }
        if self.mode == Mode::Action {
            if let Some(bad) = path.steps.iter().find(|s| !is_action_label(s)) {
                return PathVerdict::Malformed(format!("'{bad}' is not a valid action label"));
            }
        }
        let Some((k, all_resolved)) = self.existing_prefix(path) else {
            return PathVerdict::NonexistentState;
        };
        if path.steps.len() > max_len {
            return PathVerdict::TooLong(max_len);
        }
        if k == path.steps.len() && all_resolved {
            return PathVerdict::Redundant;
        }
        PathVerdict::Ok(k)
    }

    /// Materializes the new suffix of `path` as Todo nodes and returns a
    /// reference for every step.
    pub fn ensure_path(&mut self, path: &TodoPath) -> Result<Vec<NodeRef>, ForestError> {
        match self.validate_path(path, usize::MAX) {
            PathVerdict::Ok(_) => {}
            other => return Err(ForestError::Rejected(other)),
        }
        let mode = self.mode;
        let state = self.states.get_mut(&path.start_state).expect("validated");
        let mut refs = Vec::with_capacity(path.steps.len());
        let mut indices = Vec::new();
        let mut children = &mut state.children;
        for step in &path.steps {
            let i = match children.iter().position(|c| c.label.text() == step) {
                Some(i) => i,
                None => {
                    children.push(Node::todo(Label::for_mode(mode, step)));
                    children.len() - 1
                }
            };
            indices.push(i);
            refs.push(NodeRef {
                state: path.start_state.clone(),
                path: indices.clone(),
            });
            children = &mut children[i].children;
        }
        Ok(refs)
    }

    pub fn record_outcome(
        &mut self,
        r: &NodeRef,
        key_result: &str,
        failed: bool,
        trajectory_ref: Option<String>,
        checkpoint: Option<SnapshotId>,
    ) -> Result<(), ForestError> {
        let mut key = compact_key_result(key_result);
        if failed {
            if !key.starts_with(FAILED_RESULT) {
                key = if key.is_empty() {
                    FAILED_RESULT.to_string()
                } else {
                    compact_key_result(&format!("{FAILED_RESULT}: {key}"))
                };
            }
        } else if key == TODO_MARKER || key.starts_with(FAILED_RESULT) {
            return Err(ForestError::ReservedKeyResult(key));
        }
        let node = self.node_mut(r).ok_or_else(|| ForestError::NoSuchNode(r.clone()))?;
        if !node.status.is_todo() {
            return Err(ForestError::AlreadyResolved);
        }
        node.status = if failed { Status::Failed(key) } else { Status::Done(key) };
        node.trajectory_ref = trajectory_ref;
        node.checkpoint = checkpoint;
        Ok(())
    }

    /// Turns a successful node into the root of a new state and returns the
    /// new state's name.
    pub fn promote(&mut self, r: &NodeRef, new_name: &str, summary: &str) -> Result<String, ForestError> {
        if !is_state_name(new_name) {
            return Err(ForestError::InvalidStateName(new_name.to_string()));
        }
        if self.states.contains_key(new_name) {
            return Err(ForestError::DuplicateState(new_name.to_string()));
        }
        let summary = one_line(summary);
        if summary.is_empty() {
            return Err(ForestError::EmptySummary);
        }
        let steps = self.labels_of(r).ok_or_else(|| ForestError::NoSuchNode(r.clone()))?;
        let node = self.node_mut(r).ok_or_else(|| ForestError::NoSuchNode(r.clone()))?;
        if !matches!(node.status, Status::Done(_)) || node.promoted_to.is_some() {
            return Err(ForestError::NotPromotable);
        }
        node.promoted_to = Some(new_name.to_string());
        let checkpoint = node.checkpoint.clone();
        self.states.insert(
            new_name.to_string(),
            StateNode {
                name: new_name.to_string(),
                summary,
                children: Vec::new(),
                checkpoint,
                origin: Some(Origin {
                    state: r.state.clone(),
                    steps,
                }),
            },
        );
        Ok(new_name.to_string())
    }

    /// Splits `path` at its first Todo or absent step: the deepest resolved
    /// node (or the state root) and the steps still to execute.
    pub fn explored_prefix(&self, path: &TodoPath) -> Result<(NodeRef, Vec<String>), ForestError> {
        let state = self
            .states
            .get(&path.start_state)
            .ok_or(ForestError::Rejected(PathVerdict::NonexistentState))?;
        let mut at = NodeRef::root(&path.start_state);
        let mut children = &state.children;
        for (k, step) in path.steps.iter().enumerate() {
            match children.iter().position(|c| c.label.text() == step) {
                Some(i) if !children[i].status.is_todo() => {
                    at.path.push(i);
                    children = &children[i].children;
                }
                _ => return Ok((at, path.steps[k..].to_vec())),
            }
        }
        Ok((at, Vec::new()))
    }

    /// One path per Todo leaf, in state order then depth-first child order.
    pub fn open_todos(&self) -> Vec<TodoPath> {
        let mut out = Vec::new();
        for state in self.states.values() {
            let mut labels = Vec::new();
            for child in &state.children {
                collect_todo_leaves(child, &state.name, &mut labels, &mut out);
            }
        }
        out
    }

    /// The full action sequence from `init_state` to `r`, following origin
    /// links of promoted states.
    pub fn replay_actions(&self, r: &NodeRef) -> Option<Vec<String>> {
        let mut tail = self.labels_of(r)?;
        let mut state = self.states.get(&r.state)?;
        let mut hops = 0;
        while let Some(origin) = &state.origin {
            let mut head = origin.steps.clone();
            head.append(&mut tail);
            tail = head;
            state = self.states.get(&origin.state)?;
            hops += 1;
            if hops > self.states.len() {
                return None;
            }
        }
        Some(tail)
    }

    /// Every node on the way from `init_state` to `r`, following origin links
    /// of promoted states. Pairs with [`Forest::replay_actions`] element for
    /// element.
    pub fn lineage(&self, r: &NodeRef) -> Option<Vec<NodeRef>> {
        let prefixes = |state: &str, path: &[usize]| -> Vec<NodeRef> {
            (1..=path.len())
                .map(|k| NodeRef {
                    state: state.to_string(),
                    path: path[..k].to_vec(),
                })
                .collect()
        };
        self.node(r).map(|_| ()).or_else(|| r.is_root().then_some(()))?;
        let mut tail = prefixes(&r.state, &r.path);
        let mut state = self.states.get(&r.state)?;
        let mut hops = 0;
        while let Some(origin) = &state.origin {
            let at = self.resolve_labels(&origin.state, &origin.steps)?;
            let mut head = prefixes(&origin.state, &at.path);
            head.append(&mut tail);
            tail = head;
            state = self.states.get(&origin.state)?;
            hops += 1;
            if hops > self.states.len() {
                return None;
            }
        }
        Some(tail)
    }

    /// The node reached from `state` by following `labels`.
    pub fn resolve_labels(&self, state: &str, labels: &[String]) -> Option<NodeRef> {
        let mut children = &self.states.get(state)?.children;
        let mut at = NodeRef::root(state);
        for l in labels {
            let i = children.iter().position(|c| c.label.text() == l)?;
            at.path.push(i);
            children = &children[i].children;
        }
        Some(at)
    }

    /// Done nodes accepted by `pred`, in render order.
    pub fn find_done(&self, mut pred: impl FnMut(&Node) -> bool) -> Vec<NodeRef> {
        let mut out = Vec::new();
        for state in self.states.values() {
            let mut stack = Vec::new();
            walk(&state.children, &state.name, &mut stack, &mut |r, n| {
                if matches!(n.status, Status::Done(_)) && pred(n) {
                    out.push(r);
                }
            });
        }
        out
    }

    pub fn to_json(&self) -> Result<String, ForestError> {
        Ok(serde_json::to_string_pretty(&Envelope {
            version: FORMAT_VERSION,
            forest: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Forest, ForestError> {
        #[derive(Deserialize)]
        struct Version {
            version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.version != FORMAT_VERSION {
            return Err(ForestError::Version(v.version));
        }
        // typed, so the state order survives
        let full: Envelope<Forest> = serde_json::from_str(text)?;
        Ok(full.forest)
    }

    /// Copy without checkpoints and trajectory references, which the text
    /// rendering does not carry.
    pub fn without_runtime_refs(&self) -> Forest {
        fn strip(node: &mut Node) {
            node.checkpoint = None;
            node.trajectory_ref = None;
            node.children.iter_mut().for_each(strip);
        }
        let mut out = self.clone();
        for state in out.states.values_mut() {
            state.checkpoint = None;
            state.children.iter_mut().for_each(strip);
        }
        out
    }
}

pub(crate) fn is_action_label(text: &str) -> bool {
    !text.contains(": ") && !text.ends_with(':') && !text.starts_with("agent(")
}

fn collect_todo_leaves(node: &Node, state: &str, labels: &mut Vec<String>, out: &mut Vec<TodoPath>) {
    labels.push(node.label.text().to_string());
    if node.status.is_todo() && node.children.is_empty() {
        out.push(TodoPath {
            start_state: state.to_string(),
            steps: labels.clone(),
        });
    }
    for child in &node.children {
        collect_todo_leaves(child, state, labels, out);
    }
    labels.pop();
}

fn walk<'a>(children: &'a [Node], state: &str, stack: &mut Vec<usize>, f: &mut impl FnMut(NodeRef, &'a Node)) {
    for (i, node) in children.iter().enumerate() {
        stack.push(i);
        f(
            NodeRef {
                state: state.to_string(),
                path: stack.clone(),
            },
            node,
        );
        walk(&node.children, state, stack, f);
        stack.pop();
    }
}

#[cfg(test)]
mod tests;
