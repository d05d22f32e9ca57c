use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::forest::{Mode, NodeRef, TodoPath};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub action: String,
    pub observation: Observation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
}

impl Record {
    pub fn new(action: &str, observation: Observation) -> Self {
        Record {
            action: action.to_string(),
            observation,
            thought: None,
        }
    }
}

/// What the actor did while executing one TODO path. `records` starts at
/// `init_state`: the first `replayed_prefix_len` entries re-reach the
/// explored prefix, the rest are new.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub mode: Mode,
    pub origin_path: TodoPath,
    /// Observation right after reset, when known.
    pub initial_observation: Option<Observation>,
    pub records: Vec<Record>,
    pub replayed_prefix_len: usize,
    /// Set when the run stopped before every step of the path was executed.
    #[serde(default)]
    pub truncated: bool,
}

pub const ACTION_TAG: &str = "[Action]";
pub const OBSERVATION_TAG: &str = "[Observation]";
pub const THOUGHT_TAG: &str = "[Thought]";
pub const PATH_PREFIX: &str = "Path: ";

impl Trajectory {
    pub fn new_records(&self) -> &[Record] {
        &self.records[self.replayed_prefix_len.min(self.records.len())..]
    }

    /// Prompt text of the trajectory, keeping at most the last `max_records`
    /// records.
    pub fn render_for_prompt(&self, max_records: usize) -> String {
        let mut out = format!("{PATH_PREFIX}{}\n", self.origin_path);
        let skip = self.records.len().saturating_sub(max_records);
        if skip > 0 {
            out.push_str(&format!("({skip} earlier steps omitted)\n"));
        } else if let Some(obs) = &self.initial_observation {
            out.push_str(&format!("{OBSERVATION_TAG} {}\n", obs.text.trim_end()));
        }
        for r in &self.records[skip..] {
            render_record(r, &mut out);
        }
        out
    }
}

pub(crate) fn render_record(r: &Record, out: &mut String) {
    if let Some(t) = &r.thought {
        out.push_str(&format!("{THOUGHT_TAG} {}\n", t.trim()));
    }
    out.push_str(&format!("{ACTION_TAG} {}\n", r.action));
    out.push_str(&format!("{OBSERVATION_TAG} {}\n", r.observation.text.trim_end()));
}

/// Records produced by each executed node, used to replay and verify.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvidenceStore {
    by_node: HashMap<NodeRef, Vec<Record>>,
}

impl EvidenceStore {
    pub fn insert(&mut self, node: NodeRef, records: Vec<Record>) {
        self.by_node.insert(node, records);
    }

    pub fn get(&self, node: &NodeRef) -> Option<&Vec<Record>> {
        self.by_node.get(node)
    }

    pub fn get_mut(&mut self, node: &NodeRef) -> Option<&mut Vec<Record>> {
        self.by_node.get_mut(node)
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}
