//! Length-prefixed JSON framing and the command/response vocabulary.
//!
//! A frame is a 4-byte big-endian payload length followed by that many bytes
//! of UTF-8 JSON. Replies are objects with `"ok": true` plus a payload, or
//! `"ok": false` with an error code and message.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use qprofile_core::compiler::ProgramRole;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME: usize = 64 << 20;

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

/// Reads one frame. `Ok(None)` means the peer closed the connection between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// Job metadata sent along with every program upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobMeta {
    pub qubit: usize,
    pub role: ProgramRole,
    pub shots: u64,
    /// Nominal schedule duration of the whole job, seconds.
    pub schedule_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
pub enum Request {
    Stop,
    Prepare {
        module: usize,
        seq: usize,
        meta: JobMeta,
        /// Base64 of the program text.
        program: String,
    },
    Start,
    Status,
    Retrieve {
        module: usize,
    },
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::Stop => "stop",
            Request::Prepare { .. } => "prepare",
            Request::Start => "start",
            Request::Status => "status",
            Request::Retrieve { .. } => "retrieve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadFrame,
    BadState,
    UnknownTarget,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorCode::BadFrame => "bad_frame",
            ErrorCode::BadState => "bad_state",
            ErrorCode::UnknownTarget => "unknown_target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Ok(Map<String, Value>),
    Err { code: ErrorCode, msg: String },
}

impl Response {
    pub fn is_ok(&self) -> bool {
        matches!(self, Response::Ok(_))
    }

    pub fn ok(payload: impl Serialize) -> Self {
        match serde_json::to_value(payload).expect("payload serializes") {
            Value::Object(m) => Response::Ok(m),
            Value::Null => Response::Ok(Map::new()),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                Response::Ok(m)
            }
        }
    }

    pub fn err(code: ErrorCode, msg: impl Into<String>) -> Self {
        Response::Err { code, msg: msg.into() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut m = Map::new();
        match self {
            Response::Ok(payload) => {
                m.insert("ok".into(), Value::Bool(true));
                m.extend(payload.iter().filter(|(k, _)| *k != "ok").map(|(k, v)| (k.clone(), v.clone())));
            }
            Response::Err { code, msg } => {
                m.insert("ok".into(), Value::Bool(false));
                m.insert("error".into(), Value::String(code.to_string()));
                m.insert("msg".into(), Value::String(msg.clone()));
            }
        }
        serde_json::to_vec(&Value::Object(m)).expect("json")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let Value::Object(mut m) = serde_json::from_slice(bytes).map_err(|e| e.to_string())? else {
            return Err("reply is not a JSON object".into());
        };
        match m.remove("ok") {
            Some(Value::Bool(true)) => Ok(Response::Ok(m)),
            Some(Value::Bool(false)) => {
                let code = m
                    .remove("error")
                    .ok_or("error reply without code")
                    .and_then(|v| serde_json::from_value(v).map_err(|_| "unknown error code"))?;
                let msg = m.remove("msg").and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
                Ok(Response::Err { code, msg })
            }
            _ => Err("reply lacks boolean `ok`".into()),
        }
    }
}

/// Latency a command was charged, reported with every ack.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub service_ms: f64,
    /// Set when the cluster only accounted the latency instead of sleeping it.
    #[serde(rename = "virtual", default)]
    pub virtual_time: bool,
}

/// Prepare acks split the charged latency into its serialized and concurrent parts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareAck {
    pub serial_ms: f64,
    pub concurrent_ms: f64,
    #[serde(rename = "virtual", default)]
    pub virtual_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterState {
    Idle,
    Armed,
    Running,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReply {
    pub state: ClusterState,
    /// Seconds since the running job was started, 0 without a job.
    pub elapsed_s: f64,
    /// Nominal schedule duration of the current job, 0 without a job.
    pub schedule_s: f64,
    pub dilation: f64,
    pub finalize_ms: f64,
    #[serde(rename = "virtual", default)]
    pub virtual_time: bool,
}

/// Acquisition of one readout module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub module: usize,
    pub shots: u64,
    /// Qubit → one '0'/'1' character per shot.
    pub bits: BTreeMap<usize, String>,
    /// Qubit → integrated raw values, one per shot.
    pub raw: BTreeMap<usize, Vec<f64>>,
    pub service_ms: f64,
    #[serde(rename = "virtual", default)]
    pub virtual_time: bool,
}
