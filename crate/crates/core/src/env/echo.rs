use std::collections::HashMap;

use super::{EnvCapabilities, EnvError, Environment, Observation, SnapshotId};

/// Toy environment that echoes actions with a running counter. Used to
/// exercise the bridge protocol.
#[derive(Debug, Clone, Default)]
pub struct EchoEnv {
    counter: u64,
    terminal: bool,
    snapshots_enabled: bool,
    snapshots: HashMap<String, (u64, bool)>,
}

impl EchoEnv {
    pub fn new() -> Self {
        EchoEnv {
            snapshots_enabled: true,
            ..EchoEnv::default()
        }
    }

    pub fn without_snapshots() -> Self {
        EchoEnv::default()
    }
}

impl Environment for EchoEnv {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        self.counter = 0;
        self.terminal = false;
        Ok(Observation::new("echo ready"))
    }

    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        self.counter += 1;
        let mut obs = Observation::new(format!("echo #{}: {action}", self.counter));
        if action.trim() == "quit" {
            self.terminal = true;
            obs.terminal = true;
        }
        if action.trim() == "score" {
            obs.score_delta = 1;
        }
        Ok(obs)
    }

    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        if !self.snapshots_enabled {
            return Err(EnvError::Unsupported("snapshot"));
        }
        let id = format!("echo-{}", self.snapshots.len());
        self.snapshots.insert(id.clone(), (self.counter, self.terminal));
        Ok(SnapshotId(id))
    }

    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError> {
        if !self.snapshots_enabled {
            return Err(EnvError::Unsupported("restore"));
        }
        let (counter, terminal) = *self
            .snapshots
            .get(&id.0)
            .ok_or_else(|| EnvError::UnknownSnapshot(id.0.clone()))?;
        self.counter = counter;
        self.terminal = terminal;
        Ok(())
    }

    fn capabilities(&self) -> EnvCapabilities {
        EnvCapabilities {
            snapshot_restore: self.snapshots_enabled,
            deterministic: true,
            action_inventory: Some(vec!["look".into(), "wait".into(), "score".into(), "quit".into()]),
        }
    }

    fn fingerprint(&self) -> String {
        "echo".into()
    }
}
