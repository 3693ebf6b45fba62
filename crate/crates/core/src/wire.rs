//! Newline-delimited JSON prediction protocol for external models.
//!
//! The normative grammar lives in `docs/wire-protocol.md`. In short: the
//! client sends `{"op":"hello","version":1}` and expects
//! `{"op":"hello","n_features":p,"name":s}`; each batch is
//! `{"op":"predict","id":n,"X":[[...],...]}` answered by
//! `{"op":"predict","id":n,"y":[...]}`. Ids strictly increase and replies
//! come back in request order. A server may answer any request with
//! `{"op":"error","id":n,"msg":s}`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::predictors::{Predict, PredictorHandle, PredictorKind};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("could not start adapter '{command}': {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("could not connect to {addr}: {source}")]
    Connect {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("adapter reports {model} features but the data has {data}")]
    FeatureMismatch { model: usize, data: usize },
    #[error("reply id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("reply to request {id} has {got} values for {expected} rows")]
    LengthMismatch { id: u64, expected: usize, got: usize },
    #[error("reply to request {id} contains a non-finite value")]
    NonFinite { id: u64 },
    #[error("request contains a non-finite value; NaN and infinities are not allowed on the wire")]
    NonFiniteRequest,
    #[error("adapter error for request {id:?}: {msg}")]
    Remote { id: Option<u64>, msg: String },
    #[error("connection closed (last good id: {})", last_good_id.map_or("none".to_string(), |i| i.to_string()))]
    BrokenPipe { last_good_id: Option<u64> },
    #[error("connection was abandoned after an earlier error")]
    Abandoned,
    #[error("prediction batch must contain at least one row")]
    EmptyBatch,
    #[error("batch rows have {found} values, expected {expected}")]
    RowWidth { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// Shell command whose stdin/stdout carry the protocol.
    Stdio {
        command: String,
    },
    Tcp {
        host: String,
        port: u16,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireConfig {
    pub transport: Transport,
    /// Rows per predict request.
    pub batch_size: usize,
    /// Requests in flight before the client waits for replies.
    pub window: usize,
    pub timeout: Duration,
    /// Expected feature count; the handshake fails on a mismatch.
    pub n_features: usize,
}

impl WireConfig {
    pub fn stdio(command: impl Into<String>, n_features: usize) -> Self {
        Self {
            transport: Transport::Stdio {
                command: command.into(),
            },
            batch_size: 10_000,
            window: 4,
            timeout: Duration::from_secs(30),
            n_features,
        }
    }

    pub fn tcp(host: impl Into<String>, port: u16, n_features: usize) -> Self {
        Self {
            transport: Transport::Tcp {
                host: host.into(),
                port,
            },
            ..Self::stdio("", n_features)
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Hello {
        version: u32,
    },
    Predict {
        id: u64,
        #[serde(rename = "X")]
        x: Vec<&'a [f64]>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Reply {
    Hello {
        n_features: usize,
        #[serde(default)]
        name: String,
    },
    Predict {
        id: u64,
        y: Vec<Option<f64>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        msg: String,
    },
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    socket: Option<TcpStream>,
    timeout: Duration,
    next_id: u64,
    last_good_id: Option<u64>,
    failed: bool,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
        // The reader thread holds a clone of the socket; shut it down so the
        // peer sees end of stream.
        if let Some(socket) = self.socket.as_ref() {
            let _ = socket.shutdown(std::net::Shutdown::Both);
        }
    }
}

fn spawn_reader<R: io::Read + Send + 'static>(source: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let reader = BufReader::new(source);
        for line in reader.lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl Connection {
    fn open(cfg: &WireConfig) -> Result<Self, WireError> {
        match &cfg.transport {
            Transport::Stdio { command } => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(command)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|source| WireError::Spawn {
                        command: command.clone(),
                        source,
                    })?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Self {
                    writer: Box::new(stdin),
                    lines: spawn_reader(stdout),
                    child: Some(child),
                    socket: None,
                    timeout: cfg.timeout,
                    next_id: 1,
                    last_good_id: None,
                    failed: false,
                })
            }
            Transport::Tcp { host, port } => {
                let addr = format!("{host}:{port}");
                let stream = TcpStream::connect(&addr).map_err(|source| WireError::Connect {
                    addr: addr.clone(),
                    source,
                })?;
                let _ = stream.set_nodelay(true);
                stream
                    .set_write_timeout(Some(cfg.timeout))
                    .map_err(|source| WireError::Connect { addr, source })?;
                let read_half = stream.try_clone().map_err(|source| WireError::Connect {
                    addr: format!("{host}:{port}"),
                    source,
                })?;
                Ok(Self {
                    socket: stream.try_clone().ok(),
                    writer: Box::new(stream),
                    lines: spawn_reader(read_half),
                    child: None,
                    timeout: cfg.timeout,
                    next_id: 1,
                    last_good_id: None,
                    failed: false,
                })
            }
        }
    }

    fn send(&mut self, msg: &Request<'_>) -> Result<(), WireError> {
        let mut line = serde_json::to_vec(msg).map_err(|e| WireError::Malformed(e.to_string()))?;
        line.push(b'\n');
        self.writer
            .write_all(&line)
            .and_then(|_| self.writer.flush())
            .map_err(|e| match e.kind() {
                io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => WireError::Timeout(self.timeout),
                _ => WireError::BrokenPipe {
                    last_good_id: self.last_good_id,
                },
            })
    }

    fn recv(&mut self) -> Result<Reply, WireError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => {
                return Err(WireError::BrokenPipe {
                    last_good_id: self.last_good_id,
                })
            }
            Err(RecvTimeoutError::Timeout) => return Err(WireError::Timeout(self.timeout)),
        };
        let reply: Reply =
            serde_json::from_str(line.trim()).map_err(|e| WireError::Malformed(format!("{e}: {}", truncate(&line))))?;
        if let Reply::Error { id, msg } = reply {
            return Err(WireError::Remote { id, msg });
        }
        Ok(reply)
    }

    fn hello(&mut self) -> Result<(usize, String), WireError> {
        self.send(&Request::Hello {
            version: PROTOCOL_VERSION,
        })?;
        match self.recv()? {
            Reply::Hello { n_features, name } => Ok((n_features, name)),
            _ => Err(WireError::Malformed("expected a hello reply".into())),
        }
    }

    /// Sends every chunk, keeping at most `window` requests unanswered.
    fn predict(&mut self, rows: &[f64], p: usize, batch_size: usize, window: usize) -> Result<Vec<f64>, WireError> {
        let chunks: Vec<&[f64]> = rows.chunks(batch_size * p).collect();
        let mut pending = std::collections::VecDeque::new();
        let mut out = Vec::with_capacity(rows.len() / p);
        let mut next = 0;
        // After a failed write, replies already in flight are still read so
        // the error names the last id that really completed.
        let mut broken = false;
        while (next < chunks.len() && !broken) || !pending.is_empty() {
            while next < chunks.len() && pending.len() < window && !broken {
                let id = self.next_id;
                self.next_id += 1;
                let x: Vec<&[f64]> = chunks[next].chunks_exact(p).collect();
                let m = x.len();
                match self.send(&Request::Predict { id, x }) {
                    Ok(()) => {
                        pending.push_back((id, m));
                        next += 1;
                    }
                    Err(WireError::BrokenPipe { .. }) => broken = true,
                    Err(e) => return Err(e),
                }
            }
            let Some((id, m)) = pending.pop_front() else {
                break;
            };
            match self.recv()? {
                Reply::Predict { id: got, y } => {
                    if got != id {
                        return Err(WireError::IdMismatch { expected: id, got });
                    }
                    if y.len() != m {
                        return Err(WireError::LengthMismatch {
                            id,
                            expected: m,
                            got: y.len(),
                        });
                    }
                    for v in y {
                        match v {
                            Some(v) if v.is_finite() => out.push(v),
                            _ => return Err(WireError::NonFinite { id }),
                        }
                    }
                    self.last_good_id = Some(id);
                }
                _ => return Err(WireError::Malformed("expected a predict reply".into())),
            }
        }
        if broken {
            return Err(WireError::BrokenPipe {
                last_good_id: self.last_good_id,
            });
        }
        Ok(out)
    }
}

fn truncate(s: &str) -> String {
    if s.len() <= 120 {
        s.to_string()
    } else {
        let mut end = 120;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

/// Model served by an external process or socket. Calls are serialized over
/// a single connection.
pub struct WirePredictor {
    conn: Mutex<Connection>,
    n_features: usize,
    batch_size: usize,
    window: usize,
    name: String,
}

impl std::fmt::Debug for WirePredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WirePredictor")
            .field("name", &self.name)
            .field("n_features", &self.n_features)
            .field("batch_size", &self.batch_size)
            .finish()
    }
}

impl WirePredictor {
    pub fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>, WireError> {
        let p = self.n_features;
        if rows.is_empty() {
            return Err(WireError::EmptyBatch);
        }
        if !rows.len().is_multiple_of(p) {
            return Err(WireError::RowWidth {
                expected: p,
                found: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(WireError::NonFiniteRequest);
        }
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if conn.failed {
            return Err(WireError::Abandoned);
        }
        let result = conn.predict(rows, p, self.batch_size, self.window);
        conn.failed = result.is_err();
        result
    }
}

impl Predict for WirePredictor {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_batch(rows)?)
    }
}

/// Connects, exchanges hellos and checks the adapter's feature count.
pub fn handshake(cfg: &WireConfig) -> Result<PredictorHandle> {
    if cfg.batch_size == 0 || cfg.window == 0 {
        return Err(crate::error::Error::invalid("batch size and window must be at least 1"));
    }
    if cfg.timeout.is_zero() {
        return Err(crate::error::Error::invalid("timeout must be positive"));
    }
    let mut conn = Connection::open(cfg)?;
    let (n_features, name) = conn.hello()?;
    if n_features != cfg.n_features {
        return Err(WireError::FeatureMismatch {
            model: n_features,
            data: cfg.n_features,
        }
        .into());
    }
    let kind = match cfg.transport {
        Transport::Stdio { .. } => PredictorKind::ExternalProcess,
        Transport::Tcp { .. } => PredictorKind::ExternalTcp,
    };
    let predictor = WirePredictor {
        conn: Mutex::new(conn),
        n_features,
        batch_size: cfg.batch_size,
        window: cfg.window,
        name: name.clone(),
    };
    Ok(PredictorHandle::new(kind, Arc::new(predictor)).with_meta("name", name))
}

/// Reference echo-sum server: answers each predict with the row sums.
/// Malformed lines get an error reply and the loop continues.
pub fn serve_echo_sum<R: BufRead, W: Write>(input: R, mut output: W, n_features: usize) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(msg) => echo_reply(&msg, n_features),
            Err(e) => serde_json::json!({"op": "error", "id": null, "msg": format!("bad json: {e}")}),
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn echo_reply(msg: &serde_json::Value, n_features: usize) -> serde_json::Value {
    use serde_json::json;
    let id = msg.get("id").cloned().unwrap_or(serde_json::Value::Null);
    match msg.get("op").and_then(|v| v.as_str()) {
        Some("hello") => json!({"op": "hello", "n_features": n_features, "name": "echo-sum"}),
        Some("predict") => {
            let rows = msg.get("X").and_then(|x| x.as_array());
            let sums: Option<Vec<f64>> = rows.and_then(|rows| {
                rows.iter()
                    .map(|r| r.as_array().map(|r| r.iter().filter_map(|v| v.as_f64()).sum()))
                    .collect()
            });
            match sums {
                Some(y) => json!({"op": "predict", "id": id, "y": y}),
                None => json!({"op": "error", "id": id, "msg": "X must be an array of rows"}),
            }
        }
        _ => json!({"op": "error", "id": id, "msg": "unknown op"}),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_encoding() {
        let rows = [1.0, 2.5, -3.0, 0.1];
        let x: Vec<&[f64]> = rows.chunks_exact(2).collect();
        let s = serde_json::to_string(&Request::Predict { id: 7, x }).unwrap();
        assert_eq!(s, r#"{"op":"predict","id":7,"X":[[1.0,2.5],[-3.0,0.1]]}"#);
        let h = serde_json::to_string(&Request::Hello { version: 1 }).unwrap();
        assert_eq!(h, r#"{"op":"hello","version":1}"#);
    }

    #[test]
    fn reply_decoding() {
        let r: Reply = serde_json::from_str(r#"{"op":"predict","id":3,"y":[1,null]}"#).unwrap();
        assert!(matches!(r, Reply::Predict { id: 3, ref y } if y == &[Some(1.0), None]));
        let r: Reply = serde_json::from_str(r#"{"op":"error","id":null,"msg":"x"}"#).unwrap();
        assert!(matches!(r, Reply::Error { id: None, .. }));
    }

    #[test]
    fn echo_server_transcript() {
        let input = concat!(
            "{\"op\":\"hello\",\"version\":1}\n",
            "{\"op\":\"predict\",\"id\":1,\"X\":[[1,2],[3,4]]}\n",
            "not json\n",
            "{\"op\":\"predict\",\"id\":2,\"X\":[[0.5,0.25]]}\n",
        );
        let mut out = Vec::new();
        serve_echo_sum(input.as_bytes(), &mut out, 2).unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0]["n_features"], 2);
        assert_eq!(lines[1]["y"], serde_json::json!([3.0, 7.0]));
        assert_eq!(lines[2]["op"], "error");
        assert_eq!(lines[3]["id"], 2);
        assert_eq!(lines[3]["y"], serde_json::json!([0.75]));
    }
}
