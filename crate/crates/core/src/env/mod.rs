//! Environment abstraction and the built-in deterministic worlds.

pub mod bridge;
mod craftworld;
mod echo;
mod roomworld;

use serde::{Deserialize, Serialize};

pub use craftworld::{CraftParams, CraftWorld};
pub use echo::EchoEnv;
pub use roomworld::{FailureStyle, RoomParams, RoomWorld};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub terminal: bool,
    pub score_delta: i64,
}

impl Observation {
    pub fn new(text: impl Into<String>) -> Self {
        Observation {
            text: text.into(),
            terminal: false,
            score_delta: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnvCapabilities {
    pub snapshot_restore: bool,
    pub deterministic: bool,
    pub action_inventory: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnapshotId(pub String);

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("unknown snapshot id '{0}'")]
    UnknownSnapshot(String),
    #[error("environment does not support {0}")]
    Unsupported(&'static str),
    #[error("step after terminal observation")]
    Terminal,
    #[error("invalid environment parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Bridge(#[from] bridge::BridgeError),
}

/// A text environment instance. Failed actions come back as ordinary
/// observations; errors are reserved for protocol misuse.
pub trait Environment: Send {
    fn reset(&mut self) -> Result<Observation, EnvError>;
    fn step(&mut self, action: &str) -> Result<Observation, EnvError>;
    fn snapshot(&mut self) -> Result<SnapshotId, EnvError>;
    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError>;
    fn capabilities(&self) -> EnvCapabilities;
    /// Stable hash of the instance definition (not of the current state).
    fn fingerprint(&self) -> String;

    /// Text describing the action interface, handed to prompts as background.
    fn background(&self) -> String {
        String::new()
    }

    /// Whether the current state satisfies a task goal. Environments that
    /// cannot judge return false.
    fn goal_reached(&self, _goal: &TaskGoal) -> bool {
        false
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        (**self).reset()
    }
    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        (**self).step(action)
    }
    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        (**self).snapshot()
    }
    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError> {
        (**self).restore(id)
    }
    fn capabilities(&self) -> EnvCapabilities {
        (**self).capabilities()
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
    fn background(&self) -> String {
        (**self).background()
    }
    fn goal_reached(&self, goal: &TaskGoal) -> bool {
        (**self).goal_reached(goal)
    }
}

/// Counts `step` calls and can hide snapshot support from the caller.
pub struct StepCounter<E> {
    inner: E,
    steps: u64,
    allow_snapshots: bool,
}

impl<E: Environment> StepCounter<E> {
    pub fn new(inner: E) -> Self {
        StepCounter {
            inner,
            steps: 0,
            allow_snapshots: true,
        }
    }

    pub fn without_snapshots(inner: E) -> Self {
        StepCounter {
            inner,
            steps: 0,
            allow_snapshots: false,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Environment> Environment for StepCounter<E> {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        self.inner.reset()
    }
    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        self.steps += 1;
        self.inner.step(action)
    }
    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        if !self.allow_snapshots {
            return Err(EnvError::Unsupported("snapshot"));
        }
        self.inner.snapshot()
    }
    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError> {
        if !self.allow_snapshots {
            return Err(EnvError::Unsupported("restore"));
        }
        self.inner.restore(id)
    }
    fn capabilities(&self) -> EnvCapabilities {
        let mut caps = self.inner.capabilities();
        caps.snapshot_restore &= self.allow_snapshots;
        caps
    }
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
    fn background(&self) -> String {
        self.inner.background()
    }
    fn goal_reached(&self, goal: &TaskGoal) -> bool {
        self.inner.goal_reached(goal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub name: String,
    /// Room name, or `*` when the object counts wherever it is listed.
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTruth {
    pub from: String,
    pub direction: String,
    /// Door name, if the passage has a door. Every door starts closed.
    pub door: Option<String>,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTruth {
    /// Wildcard pattern over action text, e.g. `take ... from ...`.
    pub action_pattern: String,
    pub requirements: String,
    /// `|`-separated keywords, any of which a correct key result mentions.
    pub key_effect: String,
}

/// Machine-checkable goal of a downstream task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskGoal {
    Reach { location: String },
    Hold { object: String },
    EatMeal,
    Collect { item: String, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub goal: String,
    pub check: TaskGoal,
    pub optimal_steps: u32,
}

/// What the generator knows about an instance. Only the harness reads it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub locations: Vec<String>,
    pub objects: Vec<ObjectTruth>,
    pub edges: Vec<EdgeTruth>,
    pub rules: Vec<RuleTruth>,
    pub tasks: Vec<TaskSpec>,
}

pub(crate) fn digest_hex(parts: &[&str]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}
