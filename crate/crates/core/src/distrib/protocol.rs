//! Newline-delimited JSON messages exchanged between coordinator and workers.
//!
//! A worker opens with `hello`. The coordinator answers with a `task` or a
//! `shutdown`. The worker sends `heartbeat`s while it trains and a `result`
//! when done, after which the coordinator sends the next `task`. A
//! `shutdown` carrying a reason is a refusal; a plain one ends the run.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::fitness::Status;
use crate::trainer::TrainSpec;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Hello {
        worker_id: String,
        protocol_version: String,
    },
    Task {
        task_id: u64,
        expr: String,
        k: usize,
        /// Fingerprint of the training setup the fitness must use.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<String>,
        seed: u64,
    },
    Result {
        task_id: u64,
        fitness: f64,
        status: Status,
        runtime_seconds: f64,
    },
    Heartbeat {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<u64>,
    },
    Shutdown {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Task { .. } => "task",
            Message::Result { .. } => "result",
            Message::Heartbeat { .. } => "heartbeat",
            Message::Shutdown { .. } => "shutdown",
        }
    }

    /// One JSON object followed by a newline.
    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string(self).expect("messages serialize");
        s.push('\n');
        s
    }

    pub fn decode(line: &str) -> Result<Message, String> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| e.to_string())
    }
}

pub fn send(w: &mut impl Write, msg: &Message) -> io::Result<()> {
    w.write_all(msg.encode().as_bytes())?;
    w.flush()
}

/// Next message, `Ok(None)` at end of stream. A line that is not a valid
/// message is reported as `InvalidData`.
pub fn receive(r: &mut impl BufRead) -> io::Result<Option<Message>> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Message::decode(&line)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Stable 64-bit FNV-1a digest of a training setup, printed as hex.
pub fn spec_fingerprint(spec: &TrainSpec) -> String {
    let json = serde_json::to_string(spec).expect("specs serialize");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in json.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
