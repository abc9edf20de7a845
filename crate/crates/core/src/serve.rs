//! Line-oriented JSON protocol that lets an external process drive an
//! environment over stdio or TCP.
//!
//! Requests and replies are one JSON object per line:
//!
//! ```text
//! {"cmd":"handshake"}              -> {"obs_dim":13,"n_actions":5,"protocol":1,...}
//! {"cmd":"reset","seed":S,"round":R} -> {"obs":[...],"info":{"round":R}}
//! {"cmd":"step","action":A}        -> {"obs":[...],"reward":x,"terminated":b,"truncated":b,"info":{...}}
//! {"cmd":"close"}                  -> {"ok":true}
//! ```
//!
//! A failed request is answered with `{"error":KIND,"detail":TEXT}` and the
//! session carries on.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::{self, JoinHandle};

use log::{debug, info, warn};
use serde_json::{json, Value};

use crate::env::{EnvError, QuantumCloudEnv, TASK_FEATURES};
use crate::workload::WorkloadError;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEnd {
    /// The client sent `close`.
    Closed,
    /// The input stream ended without `close`.
    Disconnected,
}

fn error(kind: &str, detail: impl ToString) -> Value {
    json!({"error": kind, "detail": detail.to_string()})
}

fn env_error(e: EnvError) -> Value {
    let kind = match &e {
        EnvError::InvalidAction { .. } => "InvalidAction",
        EnvError::EpisodeOver => "EpisodeOver",
        EnvError::NotReset => "NotReset",
        EnvError::RewardUndefined { .. } => "RewardUndefined",
        EnvError::EmptyRound { .. } => "EmptyRound",
        EnvError::Workload(WorkloadError::RoundOutOfRange { .. }) => "RoundOutOfRange",
        _ => "EnvError",
    };
    error(kind, e)
}

fn optional_u64(req: &Value, key: &str) -> Result<Option<u64>, Value> {
    match req.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_u64().map(Some).ok_or_else(|| {
            error(
                "BadRequest",
                format!("`{key}` must be a non-negative integer"),
            )
        }),
    }
}

/// One client conversation over an environment.
pub struct Session {
    env: QuantumCloudEnv,
    closed: bool,
}

impl Session {
    pub fn new(env: QuantumCloudEnv) -> Self {
        Session { env, closed: false }
    }

    pub fn env(&self) -> &QuantumCloudEnv {
        &self.env
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn handshake(&self) -> Value {
        let b = self.env.bounds();
        let normalize = self.env.config().options.normalize;
        let n = self.env.n_actions();
        let stride = (b.hi.len() - TASK_FEATURES) / n;
        let (low, high): (Vec<f64>, Vec<Value>) = if normalize {
            (vec![0.0; b.lo.len()], vec![json!(1.0); b.hi.len()])
        } else {
            // Raw backlog has no upper bound.
            let high =
                b.hi.iter()
                    .enumerate()
                    .map(|(i, &h)| {
                        if i < n * stride && i % stride == 1 {
                            Value::Null
                        } else {
                            json!(h)
                        }
                    })
                    .collect();
            (b.lo.clone(), high)
        };
        json!({
            "obs_dim": self.env.obs_dim(),
            "n_actions": self.env.n_actions(),
            "protocol": PROTOCOL_VERSION,
            "normalize": normalize,
            "obs_low": low,
            "obs_high": high,
            "nodes": self.env.catalog().entries().iter().map(|e| e.name.as_str()).collect::<Vec<_>>(),
        })
    }

    /// Answers one request line.
    pub fn handle_line(&mut self, line: &str) -> Value {
        let req: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error("BadRequest", format!("invalid JSON: {e}")),
        };
        let Some(cmd) = req.get("cmd").and_then(Value::as_str) else {
            return error("BadRequest", "missing string field `cmd`");
        };
        match cmd {
            "handshake" => self.handshake(),
            "reset" => {
                let (seed, round) = match (optional_u64(&req, "seed"), optional_u64(&req, "round"))
                {
                    (Ok(s), Ok(r)) => (s, r),
                    (Err(e), _) | (_, Err(e)) => return e,
                };
                match self.env.reset(seed, round.map(|r| r as usize)) {
                    Ok(obs) => json!({"obs": obs, "info": {"round": self.env.round()}}),
                    Err(e) => env_error(e),
                }
            }
            "step" => {
                let action = match req.get("action") {
                    Some(v) => match v.as_u64() {
                        Some(a) => a as usize,
                        None => {
                            return error(
                                "InvalidAction",
                                format!(
                                    "action {v} is not an index in 0..{}",
                                    self.env.n_actions()
                                ),
                            )
                        }
                    },
                    None => return error("BadRequest", "missing field `action`"),
                };
                match self.env.step(action) {
                    Ok(r) => json!({
                        "obs": r.observation,
                        "reward": r.reward,
                        "terminated": r.terminated,
                        "truncated": r.truncated,
                        "info": r.info,
                    }),
                    Err(e) => env_error(e),
                }
            }
            "close" => {
                self.closed = true;
                json!({"ok": true})
            }
            other => error("BadRequest", format!("unknown command `{other}`")),
        }
    }

    /// Serves requests until `close` or end of input.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, output: W) -> io::Result<SessionEnd> {
        let mut output = BufWriter::new(output);
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let reply = self.handle_line(&line);
            serde_json::to_writer(&mut output, &reply)?;
            output.write_all(b"\n")?;
            output.flush()?;
            if self.closed {
                return Ok(SessionEnd::Closed);
            }
        }
        Ok(SessionEnd::Disconnected)
    }
}

pub fn serve_stdio(env: QuantumCloudEnv) -> io::Result<SessionEnd> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    Session::new(env).run(stdin.lock(), stdout.lock())
}

fn serve_connection(stream: TcpStream, env: QuantumCloudEnv) -> io::Result<SessionEnd> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    Session::new(env).run(reader, stream)
}

/// Accepts connections and serves each on its own thread with a fresh
/// environment from `make_env`. Stops accepting after `max_sessions`
/// connections when given, then waits for the open sessions to end.
pub fn serve_tcp<F>(
    listener: TcpListener,
    make_env: F,
    max_sessions: Option<usize>,
) -> io::Result<()>
where
    F: Fn() -> QuantumCloudEnv,
{
    let mut handles: Vec<JoinHandle<()>> = Vec::new();
    for (k, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let peer = stream
            .peer_addr()
            .map(|a| a.to_string())
            .unwrap_or_default();
        info!("session {k} opened by {peer}");
        let env = make_env();
        handles.push(thread::spawn(move || match serve_connection(stream, env) {
            Ok(end) => debug!("session {k} ended: {end:?}"),
            Err(e) => warn!("session {k} failed: {e}"),
        }));
        handles.retain(|h| !h.is_finished());
        if max_sessions.is_some_and(|m| k + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}
