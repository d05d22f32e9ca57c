use std::io::{BufRead, Write};

use serde_json::Value;

use super::{codes, Message, PROTOCOL_VERSION};
use crate::env::{EnvError, Environment, SnapshotId};

const KNOWN_TAGS: [&str; 11] = [
    "hello", "caps", "reset", "step", "obs", "snapshot", "snap", "restore", "ok", "close", "err",
];

fn err(code: &str, message: impl Into<String>) -> Message {
    Message::Err {
        code: code.into(),
        message: message.into(),
    }
}

/// Serves one session over a line stream until `close` or end of input.
/// Malformed or unsupported requests get an `err` reply and the session
/// stays open.
pub fn serve<E: Environment + ?Sized>(env: &mut E, reader: impl BufRead, mut writer: impl Write) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, done) = handle(env, &line);
        writeln!(writer, "{}", reply.to_line())?;
        writer.flush()?;
        if done {
            break;
        }
    }
    Ok(())
}

fn handle<E: Environment + ?Sized>(env: &mut E, line: &str) -> (Message, bool) {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return (err(codes::BAD_REQUEST, format!("invalid JSON: {e}")), false),
    };
    let Some(tag) = value.get("t").and_then(Value::as_str) else {
        return (err(codes::BAD_REQUEST, "missing string field 't'"), false);
    };
    if !KNOWN_TAGS.contains(&tag) {
        return (err(codes::UNSUPPORTED, format!("unknown message type '{tag}'")), false);
    }
    let msg: Message = match serde_json::from_value(value.clone()) {
        Ok(m) => m,
        Err(e) => return (err(codes::BAD_REQUEST, e.to_string()), false),
    };
    let reply = match msg {
        Message::Hello { proto } if proto != PROTOCOL_VERSION => {
            err(codes::VERSION, format!("server speaks protocol {PROTOCOL_VERSION}"))
        }
        Message::Hello { .. } => {
            let caps = env.capabilities();
            let background = env.background();
            Message::Caps {
                proto: PROTOCOL_VERSION,
                snapshot_restore: caps.snapshot_restore,
                deterministic: caps.deterministic,
                action_inventory: caps.action_inventory,
                fingerprint: Some(env.fingerprint()),
                background: (!background.is_empty()).then_some(background),
            }
        }
        Message::Reset => observation(env.reset()),
        Message::Step { action } => observation(env.step(&action)),
        Message::Snapshot => match env.snapshot() {
            Ok(id) => Message::Snap { id: id.0 },
            Err(e) => env_err(e),
        },
        Message::Restore { id } => match env.restore(&SnapshotId(id)) {
            Ok(()) => Message::Ok,
            Err(e) => env_err(e),
        },
        Message::Close => return (Message::Ok, true),
        other => err(codes::UNSUPPORTED, format!("'{}' is a reply, not a request", other.tag())),
    };
    (reply, false)
}

fn observation(result: Result<crate::env::Observation, EnvError>) -> Message {
    match result {
        Ok(obs) => Message::Obs {
            text: obs.text,
            terminal: obs.terminal,
            score_delta: obs.score_delta,
        },
        Err(e) => env_err(e),
    }
}

fn env_err(e: EnvError) -> Message {
    let code = match &e {
        EnvError::Unsupported(_) => codes::UNSUPPORTED,
        EnvError::UnknownSnapshot(_) => codes::UNKNOWN_SNAPSHOT,
        EnvError::Terminal => codes::TERMINAL,
        _ => codes::ENV_ERROR,
    };
    err(code, e.to_string())
}
