//! Provenance headers and atomic file writes.
//!
//! Text and CSV files open with `# ` comment lines, JSON Lines files with a
//! `{"header": ...}` object and JSON documents carry a `header` field.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: String,
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, config: Value) -> Self {
        Provenance {
            command: command.to_string(),
            config,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool": "actsearch",
            "version": VERSION,
            "command": self.command,
            "config": self.config,
        })
    }

    /// `# ` prefixed lines for text and CSV outputs.
    pub fn comment_lines(&self) -> String {
        format!(
            "# actsearch {VERSION}\n# command: {}\n# config: {}\n",
            self.command,
            serde_json::to_string(&self.config).expect("config serializes")
        )
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// CSV or text body prefixed with the comment header.
pub fn write_commented(path: &Path, prov: &Provenance, body: &[u8]) -> Result<(), CliError> {
    let mut bytes = prov.comment_lines().into_bytes();
    bytes.extend_from_slice(body);
    write_atomic(path, &bytes)
}

/// JSON Lines body prefixed with a header object.
pub fn write_jsonl(path: &Path, prov: &Provenance, body: &[u8]) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec(&json!({ "header": prov.to_json() })).expect("header serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(body);
    write_atomic(path, &bytes)
}

/// A JSON object with `header` first, followed by the fields of `body`.
pub fn with_header(prov: &Provenance, body: Value) -> Value {
    let mut out = serde_json::Map::new();
    out.insert("header".into(), prov.to_json());
    match body {
        Value::Object(m) => out.extend(m),
        other => {
            out.insert("data".into(), other);
        }
    }
    Value::Object(out)
}

pub fn write_json(path: &Path, prov: &Provenance, body: Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(&with_header(prov, body)).expect("json serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn in_dir(dir: &Path, file: &str) -> PathBuf {
    dir.join(file)
}

/// Writes to stdout; a reader that has gone away ends the process quietly.
pub fn emit(text: &str) {
    let mut o = std::io::stdout().lock();
    if o.write_all(text.as_bytes()).and_then(|_| o.flush()).is_err() {
        std::process::exit(0);
    }
}

macro_rules! outln {
    ($($t:tt)*) => {
        $crate::output::emit(&format!("{}\n", format_args!($($t)*)))
    };
}
pub(crate) use outln;

/// Shortest round-tripping form, with negative zero printed as `0`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}
