//! Protocol conformance suite run against a live bridge endpoint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{codes, BridgeError, Connection, Message, PROTOCOL_VERSION};

const FALLBACK_ACTIONS: [&str; 6] = ["look", "inventory", "go north", "go south", "go east", "wait"];
const LAW_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioResult {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for ScenarioResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {:>2} {}", self.index, self.name)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

pub const SCENARIOS: [&str; 12] = [
    "handshake",
    "reset",
    "step",
    "empty action",
    "unknown message type",
    "malformed json",
    "alive after error",
    "snapshot",
    "restore unknown id",
    "snapshot law",
    "determinism",
    "close",
];

struct Suite {
    conn: Connection,
    snapshots: bool,
    actions: Vec<String>,
    rng: ChaCha8Rng,
}

type Outcome = Result<String, String>;

fn bridge(e: BridgeError) -> String {
    e.to_string()
}

impl Suite {
    fn obs(&mut self, msg: Message) -> Result<(String, bool, i64), String> {
        match self.conn.request(&msg).map_err(bridge)? {
            Message::Obs {
                text,
                terminal,
                score_delta,
            } => Ok((text, terminal, score_delta)),
            other => Err(format!("expected obs, got {}", other.to_line())),
        }
    }

    fn expect_err(&mut self, raw: &str, code: Option<&str>) -> Outcome {
        self.conn.send_raw(raw).map_err(bridge)?;
        match self.conn.recv().map_err(bridge)? {
            Message::Err { code: got, .. } => match code {
                Some(want) if want != got => Err(format!("expected code '{want}', got '{got}'")),
                _ => Ok(String::new()),
            },
            other => Err(format!("expected err, got {}", other.to_line())),
        }
    }

    fn handshake(&mut self) -> Outcome {
        match self
            .conn
            .request(&Message::Hello {
                proto: PROTOCOL_VERSION,
            })
            .map_err(bridge)?
        {
            Message::Caps {
                proto,
                snapshot_restore,
                action_inventory,
                ..
            } => {
                if proto != PROTOCOL_VERSION {
                    return Err(format!("server speaks protocol {proto}"));
                }
                self.snapshots = snapshot_restore;
                if let Some(inv) = action_inventory.filter(|v| !v.is_empty()) {
                    self.actions = inv;
                }
                Ok(format!("snapshot_restore={snapshot_restore}"))
            }
            other => Err(format!("expected caps, got {}", other.to_line())),
        }
    }

    fn reset(&mut self) -> Outcome {
        let (text, terminal, _) = self.obs(Message::Reset)?;
        if terminal {
            return Err("reset produced a terminal observation".into());
        }
        if text.is_empty() {
            return Err("reset produced empty text".into());
        }
        Ok(String::new())
    }

    fn step(&mut self) -> Outcome {
        let action = self.actions[0].clone();
        self.obs(Message::Step { action })?;
        Ok(String::new())
    }

    fn empty_action(&mut self) -> Outcome {
        self.conn
            .send_raw(&Message::Step { action: String::new() }.to_line())
            .map_err(bridge)?;
        match self.conn.recv().map_err(bridge)? {
            Message::Obs { .. } | Message::Err { .. } => Ok(String::new()),
            other => Err(format!("expected obs or err, got {}", other.to_line())),
        }
    }

    fn unknown_type(&mut self) -> Outcome {
        self.expect_err(r#"{"t":"frobnicate"}"#, Some(codes::UNSUPPORTED))
    }

    fn malformed(&mut self) -> Outcome {
        self.expect_err(r#"{"t":"step","action":"#, None)
    }

    fn alive_after_error(&mut self) -> Outcome {
        self.expect_err("not json at all", None)?;
        self.reset()
    }

    fn snapshot(&mut self) -> Outcome {
        if !self.snapshots {
            return self
                .expect_err(&Message::Snapshot.to_line(), None)
                .map(|_| "unsupported, refused as advertised".into());
        }
        match self.conn.request(&Message::Snapshot).map_err(bridge)? {
            Message::Snap { id } if !id.is_empty() => Ok(String::new()),
            other => Err(format!("expected snap, got {}", other.to_line())),
        }
    }

    fn restore_unknown(&mut self) -> Outcome {
        let msg = Message::Restore {
            id: "no-such-snapshot-7f3a".into(),
        };
        let code = self.snapshots.then_some(codes::UNKNOWN_SNAPSHOT);
        self.expect_err(&msg.to_line(), code)
    }

    fn random_actions(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| self.actions.choose(&mut self.rng).cloned().unwrap_or_default())
            .collect()
    }

    fn run_actions(&mut self, actions: &[String]) -> Result<Vec<String>, String> {
        let mut out = Vec::new();
        for a in actions {
            match self.conn.request(&Message::Step { action: a.clone() }).map_err(bridge)? {
                Message::Obs { text, terminal, .. } => {
                    out.push(format!("{terminal}|{text}"));
                    if terminal {
                        break;
                    }
                }
                Message::Err { code, .. } if code == codes::TERMINAL => break,
                other => return Err(format!("expected obs, got {}", other.to_line())),
            }
        }
        Ok(out)
    }

    fn snapshot_law(&mut self) -> Outcome {
        if !self.snapshots {
            return Ok("skipped: no snapshot support".into());
        }
        self.reset()?;
        let id = match self.conn.request(&Message::Snapshot).map_err(bridge)? {
            Message::Snap { id } => id,
            other => return Err(format!("expected snap, got {}", other.to_line())),
        };
        let actions = self.random_actions(LAW_STEPS);
        let first = self.run_actions(&actions)?;
        match self.conn.request(&Message::Restore { id }).map_err(bridge)? {
            Message::Ok => {}
            other => return Err(format!("expected ok, got {}", other.to_line())),
        }
        let second = self.run_actions(&actions)?;
        if first != second {
            return Err(format!("replay after restore diverged for {actions:?}"));
        }
        Ok(format!("{} steps replayed", first.len()))
    }

    fn determinism(&mut self) -> Outcome {
        let actions = self.random_actions(LAW_STEPS);
        let (a0, _, _) = self.obs(Message::Reset)?;
        let a = self.run_actions(&actions)?;
        let (b0, _, _) = self.obs(Message::Reset)?;
        let b = self.run_actions(&actions)?;
        if a0 != b0 || a != b {
            return Err(format!("two runs of {actions:?} differ"));
        }
        Ok(String::new())
    }

    fn close(&mut self) -> Outcome {
        self.conn.send_raw(&Message::Close.to_line()).map_err(bridge)?;
        match self.conn.recv() {
            Ok(Message::Ok) | Err(BridgeError::Closed) => Ok(String::new()),
            Ok(other) => Err(format!("expected ok, got {}", other.to_line())),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Runs every scenario in order over one connection. A failed scenario does
/// not stop the rest.
pub fn run_suite(conn: Connection, seed: u64) -> Vec<ScenarioResult> {
    let mut suite = Suite {
        conn,
        snapshots: false,
        actions: FALLBACK_ACTIONS.iter().map(|s| s.to_string()).collect(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let checks: [fn(&mut Suite) -> Outcome; 12] = [
        Suite::handshake,
        Suite::reset,
        Suite::step,
        Suite::empty_action,
        Suite::unknown_type,
        Suite::malformed,
        Suite::alive_after_error,
        Suite::snapshot,
        Suite::restore_unknown,
        Suite::snapshot_law,
        Suite::determinism,
        Suite::close,
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, check)| {
            let (passed, detail) = match check(&mut suite) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            ScenarioResult {
                index: i + 1,
                name: SCENARIOS[i],
                passed,
                detail,
            }
        })
        .collect()
}
