//! Newline-delimited JSON protocol for driving environments that live in
//! another process.
//!
//! Every message is one JSON object on its own line with a `t` tag:
//!
//! ```text
//! -> {"t":"hello","proto":1}
//! <- {"t":"caps","proto":1,"snapshot_restore":true,"deterministic":true,"action_inventory":null}
//! -> {"t":"step","action":"go north"}
//! <- {"t":"obs","text":"...","terminal":false,"score_delta":0}
//! -> {"t":"snapshot"}
//! <- {"t":"snap","id":"s0"}
//! -> {"t":"restore","id":"s0"}
//! <- {"t":"ok"}
//! -> {"t":"frobnicate"}
//! <- {"t":"err","code":"unsupported","message":"..."}
//! ```

mod client;
pub mod conformance;
mod server;

use serde::{Deserialize, Serialize};

pub use client::{BridgeEnv, Connection};
pub use server::serve;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Message {
    Hello {
        proto: u32,
    },
    Caps {
        proto: u32,
        snapshot_restore: bool,
        deterministic: bool,
        action_inventory: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fingerprint: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background: Option<String>,
    },
    Reset,
    Step {
        action: String,
    },
    Obs {
        text: String,
        terminal: bool,
        score_delta: i64,
    },
    Snapshot,
    Snap {
        id: String,
    },
    Restore {
        id: String,
    },
    Ok,
    Close,
    Err {
        code: String,
        #[serde(default)]
        message: String,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Caps { .. } => "caps",
            Message::Reset => "reset",
            Message::Step { .. } => "step",
            Message::Obs { .. } => "obs",
            Message::Snapshot => "snapshot",
            Message::Snap { .. } => "snap",
            Message::Restore { .. } => "restore",
            Message::Ok => "ok",
            Message::Close => "close",
            Message::Err { .. } => "err",
        }
    }
}

/// Error codes carried by `err` replies.
pub mod codes {
    pub const UNSUPPORTED: &str = "unsupported";
    pub const BAD_REQUEST: &str = "bad_request";
    pub const UNKNOWN_SNAPSHOT: &str = "unknown_snapshot";
    pub const TERMINAL: &str = "terminal";
    pub const ENV_ERROR: &str = "env_error";
    pub const VERSION: &str = "version";
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("bridge i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("no reply within {0:?}")]
    Timeout(std::time::Duration),
    #[error("protocol violation: {message} (payload: {payload})")]
    Protocol { message: String, payload: String },
    #[error("protocol version mismatch: expected {expected}, server speaks {got}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },
    #[error("connection closed")]
    Closed,
    #[error("unsupported endpoint '{0}'")]
    Endpoint(String),
}
