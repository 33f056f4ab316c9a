//! Host side of the sandbox runner protocol.
//!
//! The runner is a long-lived child process speaking line-delimited JSON on
//! stdin/stdout: one request object per line, one response per line. A
//! request that outlives its deadline gets the child killed; the next request
//! on that slot starts a fresh runner.
//!
//! Request:
//!
//! ```text
//! {"protocol_version":1,"id":7,"mode":"matrix"|"rollout","source":"...",
//!  "entry":"heuristics","payload":{"args":[...],"start":0},
//!  "limits":{"cpu_seconds":60,"memory_mb":2048}}
//! ```
//!
//! Array arguments are `{"name","kind":"array","shape","encoding","data"}`
//! with `encoding` either `json` (nested-free flat list, row-major) or
//! `base64` (little-endian f64). Scalars are `{"name","kind":"int"|"float",
//! "data":x}`. Large or non-finite arrays travel as base64.
//!
//! Response: `{"protocol_version":1,"id":7,"status":"ok"|"exception"|
//! "timeout_internal","result":{...},"diagnostic":"..."}` where `result` is an
//! array object for `matrix` and `{"tour":[...]}` for `rollout`.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use hevo_core::matrix::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Arg, ArgValue, ExecFailure, HeuristicRuntime, RawArray};

pub const PROTOCOL_VERSION: u32 = 1;
const BASE64_THRESHOLD: usize = 1_000_000;
const DIAGNOSTIC_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Runner executable; started with `args` and nothing else.
    pub program: PathBuf,
    pub args: Vec<String>,
    pub memory_mb: u64,
    /// Idle runners kept for reuse.
    pub pool_size: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            program: PathBuf::from("hevo-sandbox-runner"),
            args: Vec::new(),
            memory_mb: 2048,
            pool_size: 8,
        }
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Session {
    fn spawn(cfg: &SandboxConfig) -> Result<Self, ExecFailure> {
        let mut child = Command::new(&cfg.program)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| {
                ExecFailure::exec(format!(
                    "cannot start runner {}: {e}",
                    cfg.program.display()
                ))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Session {
            child,
            stdin,
            lines: rx,
        })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Runtime that sends code to external runner processes.
pub struct SandboxRuntime {
    config: SandboxConfig,
    idle: Mutex<Vec<Session>>,
    next_id: AtomicU64,
    spawned: AtomicU64,
}

impl SandboxRuntime {
    pub fn new(config: SandboxConfig) -> Self {
        SandboxRuntime {
            config,
            idle: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(1),
            spawned: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Runner processes started so far.
    pub fn spawned(&self) -> u64 {
        self.spawned.load(Ordering::SeqCst)
    }

    fn checkout(&self) -> Result<Session, ExecFailure> {
        if let Some(s) = self.idle.lock().expect("pool lock").pop() {
            return Ok(s);
        }
        self.spawned.fetch_add(1, Ordering::SeqCst);
        Session::spawn(&self.config)
    }

    fn checkin(&self, s: Session) {
        let mut idle = self.idle.lock().expect("pool lock");
        if idle.len() < self.config.pool_size {
            idle.push(s);
        } else {
            drop(idle);
            s.kill();
        }
    }

    fn call(&self, mut request: Value, timeout: Duration) -> Result<Value, ExecFailure> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        request["id"] = json!(id);
        request["protocol_version"] = json!(PROTOCOL_VERSION);
        request["limits"] = json!({
            "cpu_seconds": timeout.as_secs_f64().ceil() as u64,
            "memory_mb": self.config.memory_mb,
        });
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');

        let mut session = self.checkout()?;
        if let Err(e) = session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush())
        {
            session.kill();
            return Err(ExecFailure::exec(format!("runner stdin closed: {e}")));
        }
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match session.lines.recv_timeout(left) {
                Ok(Ok(text)) => {
                    let Ok(resp) = serde_json::from_str::<Value>(&text) else {
                        session.kill();
                        return Err(ExecFailure::exec("runner sent malformed JSON"));
                    };
                    if resp.get("id").and_then(Value::as_u64) != Some(id) {
                        continue;
                    }
                    self.checkin(session);
                    return Ok(resp);
                }
                Ok(Err(e)) => {
                    session.kill();
                    return Err(ExecFailure::exec(format!("runner stdout failed: {e}")));
                }
                Err(RecvTimeoutError::Timeout) => {
                    session.kill();
                    return Err(ExecFailure::timeout(format!(
                        "no response within {:.1}s, runner killed",
                        timeout.as_secs_f64()
                    )));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    session.kill();
                    return Err(ExecFailure::exec("runner exited"));
                }
            }
        }
    }
}

impl Drop for SandboxRuntime {
    fn drop(&mut self) {
        if let Ok(mut idle) = self.idle.lock() {
            for s in idle.drain(..) {
                s.kill();
            }
        }
    }
}

fn encode_array(a: &RawArray) -> Value {
    let binary = a.data.len() >= BASE64_THRESHOLD || a.data.iter().any(|x| !x.is_finite());
    if binary {
        let bytes: Vec<u8> = a.data.iter().flat_map(|x| x.to_le_bytes()).collect();
        json!({"shape": a.shape, "encoding": "base64", "data": B64.encode(bytes)})
    } else {
        json!({"shape": a.shape, "encoding": "json", "data": a.data})
    }
}

fn encode_arg(arg: &Arg) -> Value {
    match &arg.value {
        ArgValue::Array(a) => {
            let mut v = encode_array(a);
            v["name"] = json!(arg.name);
            v["kind"] = json!("array");
            v
        }
        ArgValue::Int { value } => json!({"name": arg.name, "kind": "int", "data": value}),
        ArgValue::Float { value } => json!({"name": arg.name, "kind": "float", "data": value}),
    }
}

#[derive(Deserialize)]
struct WireArray {
    shape: Vec<usize>,
    encoding: String,
    data: Value,
}

fn decode_array(v: &Value) -> Result<RawArray, ExecFailure> {
    let w: WireArray = serde_json::from_value(v.clone())
        .map_err(|e| ExecFailure::shape(format!("result is not an array object: {e}")))?;
    let data: Vec<f64> = match w.encoding.as_str() {
        "json" => serde_json::from_value(w.data)
            .map_err(|e| ExecFailure::shape(format!("result data: {e}")))?,
        "base64" => {
            let s = w
                .data
                .as_str()
                .ok_or_else(|| ExecFailure::shape("base64 data is not a string"))?;
            let bytes = B64
                .decode(s)
                .map_err(|e| ExecFailure::shape(format!("result data: {e}")))?;
            if bytes.len() % 8 != 0 {
                return Err(ExecFailure::shape("base64 payload is not whole f64 values"));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        }
        other => return Err(ExecFailure::shape(format!("unknown encoding `{other}`"))),
    };
    if w.shape.iter().product::<usize>() != data.len() {
        return Err(ExecFailure::shape(format!(
            "shape {:?} does not match {} values",
            w.shape,
            data.len()
        )));
    }
    Ok(RawArray {
        shape: w.shape,
        data,
    })
}

fn check_status(resp: &Value) -> Result<&Value, ExecFailure> {
    let diag = || {
        let mut d = resp
            .get("diagnostic")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        if d.len() > DIAGNOSTIC_LIMIT {
            let mut cut = DIAGNOSTIC_LIMIT;
            while !d.is_char_boundary(cut) {
                cut -= 1;
            }
            d.truncate(cut);
        }
        d
    };
    match resp.get("status").and_then(Value::as_str) {
        Some("ok") => resp
            .get("result")
            .ok_or_else(|| ExecFailure::exec("ok response without result")),
        Some("exception") => Err(ExecFailure::exec(diag())),
        Some("timeout_internal") => Err(ExecFailure::timeout(diag())),
        other => Err(ExecFailure::exec(format!("unknown status {other:?}"))),
    }
}

impl HeuristicRuntime for SandboxRuntime {
    fn matrix(
        &self,
        source: &str,
        entry: &str,
        args: &[Arg],
        timeout: Duration,
    ) -> Result<RawArray, ExecFailure> {
        let req = json!({
            "mode": "matrix",
            "source": source,
            "entry": entry,
            "payload": {"args": args.iter().map(encode_arg).collect::<Vec<_>>()},
        });
        let resp = self.call(req, timeout)?;
        decode_array(check_status(&resp)?)
    }

    fn rollout(
        &self,
        source: &str,
        entry: &str,
        dist: &Matrix,
        start: usize,
        timeout: Duration,
    ) -> Result<Vec<usize>, ExecFailure> {
        let d = Arg {
            name: "distance_matrix".into(),
            value: ArgValue::Array(RawArray::matrix(dist)),
        };
        let req = json!({
            "mode": "rollout",
            "source": source,
            "entry": entry,
            "payload": {"args": [encode_arg(&d)], "start": start},
        });
        let resp = self.call(req, timeout)?;
        let result = check_status(&resp)?;
        let tour = result
            .get("tour")
            .cloned()
            .ok_or_else(|| ExecFailure::exec("rollout result without tour"))?;
        serde_json::from_value(tour).map_err(|e| ExecFailure::exec(format!("tour: {e}")))
    }
}
