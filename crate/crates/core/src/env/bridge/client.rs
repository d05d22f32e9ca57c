use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{codes, BridgeError, Message, PROTOCOL_VERSION};
use crate::env::{EnvCapabilities, EnvError, Environment, Observation, SnapshotId};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// A line-oriented duplex channel. A reader thread feeds incoming lines
/// through a channel so every receive can time out.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    child: Option<Child>,
}

impl Connection {
    pub fn from_streams(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        let line = line.trim_end_matches(['\n', '\r']).to_string();
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Connection {
            writer: Box::new(writer),
            lines: rx,
            timeout: DEFAULT_TIMEOUT,
            child: None,
        }
    }

    /// Opens `tcp:HOST:PORT`, `unix:PATH`, or `exec:COMMAND ARGS...` (a child
    /// process speaking the protocol on stdio). A bare `HOST:PORT` is TCP.
    pub fn open(endpoint: &str) -> Result<Self, BridgeError> {
        if let Some(cmd) = endpoint.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace();
            let program = parts.next().ok_or_else(|| BridgeError::Endpoint(endpoint.into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let mut conn = Connection::from_streams(stdout, stdin);
            conn.child = Some(child);
            return Ok(conn);
        }
        #[cfg(unix)]
        if let Some(path) = endpoint.strip_prefix("unix:") {
            let stream = std::os::unix::net::UnixStream::connect(path)?;
            let reader = stream.try_clone()?;
            return Ok(Connection::from_streams(reader, stream));
        }
        let addr = endpoint.strip_prefix("tcp:").unwrap_or(endpoint);
        if !addr.contains(':') {
            return Err(BridgeError::Endpoint(endpoint.into()));
        }
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Connection::from_streams(reader, stream))
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn send_raw(&mut self, line: &str) -> Result<(), BridgeError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv_raw(&mut self) -> Result<String, BridgeError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(BridgeError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(BridgeError::Closed),
        }
    }

    pub fn recv(&mut self) -> Result<Message, BridgeError> {
        let line = self.recv_raw()?;
        serde_json::from_str(&line).map_err(|e| BridgeError::Protocol {
            message: e.to_string(),
            payload: line,
        })
    }

    pub fn request(&mut self, msg: &Message) -> Result<Message, BridgeError> {
        self.send_raw(&msg.to_line())?;
        self.recv()
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// An [`Environment`] whose calls travel over the bridge protocol.
pub struct BridgeEnv {
    conn: Connection,
    caps: EnvCapabilities,
    fingerprint: String,
    background: String,
}

impl BridgeEnv {
    pub fn connect(endpoint: &str) -> Result<Self, BridgeError> {
        BridgeEnv::handshake(Connection::open(endpoint)?)
    }

    pub fn handshake(mut conn: Connection) -> Result<Self, BridgeError> {
        let reply = conn.request(&Message::Hello {
            proto: PROTOCOL_VERSION,
        })?;
        match reply {
            Message::Caps {
                proto,
                snapshot_restore,
                deterministic,
                action_inventory,
                fingerprint,
                background,
            } => {
                if proto != PROTOCOL_VERSION {
                    return Err(BridgeError::VersionMismatch {
                        expected: PROTOCOL_VERSION,
                        got: proto,
                    });
                }
                Ok(BridgeEnv {
                    conn,
                    caps: EnvCapabilities {
                        snapshot_restore,
                        deterministic,
                        action_inventory,
                    },
                    fingerprint: fingerprint.unwrap_or_default(),
                    background: background.unwrap_or_default(),
                })
            }
            Message::Err { code, message } if code == codes::VERSION => Err(BridgeError::Protocol {
                message: format!("server rejected protocol version: {message}"),
                payload: String::new(),
            }),
            other => Err(unexpected("caps", &other)),
        }
    }

    fn observation(&mut self, msg: &Message) -> Result<Observation, EnvError> {
        match self.conn.request(msg)? {
            Message::Obs {
                text,
                terminal,
                score_delta,
            } => Ok(Observation {
                text,
                terminal,
                score_delta,
            }),
            Message::Err { code, .. } if code == codes::TERMINAL => Err(EnvError::Terminal),
            Message::Err { code, message } => Err(BridgeError::Remote { code, message }.into()),
            other => Err(unexpected("obs", &other).into()),
        }
    }

    pub fn close(mut self) -> Result<(), BridgeError> {
        self.conn.send_raw(&Message::Close.to_line())?;
        match self.conn.recv() {
            Ok(_) | Err(BridgeError::Closed) => Ok(()),
            Err(e) => Err(e),
        }
    }
}

fn unexpected(wanted: &str, got: &Message) -> BridgeError {
    BridgeError::Protocol {
        message: format!("expected '{wanted}', got '{}'", got.tag()),
        payload: got.to_line(),
    }
}

impl Environment for BridgeEnv {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        self.observation(&Message::Reset)
    }

    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        self.observation(&Message::Step {
            action: action.to_string(),
        })
    }

    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        if !self.caps.snapshot_restore {
            return Err(EnvError::Unsupported("snapshot"));
        }
        match self.conn.request(&Message::Snapshot)? {
            Message::Snap { id } => Ok(SnapshotId(id)),
            Message::Err { code, message } => Err(BridgeError::Remote { code, message }.into()),
            other => Err(unexpected("snap", &other).into()),
        }
    }

    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError> {
        if !self.caps.snapshot_restore {
            return Err(EnvError::Unsupported("restore"));
        }
        match self.conn.request(&Message::Restore { id: id.0.clone() })? {
            Message::Ok => Ok(()),
            Message::Err { code, .. } if code == codes::UNKNOWN_SNAPSHOT => Err(EnvError::UnknownSnapshot(id.0.clone())),
            Message::Err { code, message } => Err(BridgeError::Remote { code, message }.into()),
            other => Err(unexpected("ok", &other).into()),
        }
    }

    fn capabilities(&self) -> EnvCapabilities {
        self.caps.clone()
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn background(&self) -> String {
        self.background.clone()
    }
}
