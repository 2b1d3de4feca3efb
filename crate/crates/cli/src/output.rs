//! Output routing and deterministic rendering.
//!
//! Every artifact is UTF-8 with LF line endings and a trailing newline.
//! Floats are rendered with the shortest decimal that round-trips, so two
//! runs of the same invocation produce byte-identical files.

use crate::Failure;
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

/// Where an artifact goes: stdout, or an atomically written file.
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn new(path: Option<PathBuf>) -> Self {
        path.map_or(Sink::Stdout, Sink::File)
    }

    pub fn is_file(&self) -> bool {
        matches!(self, Sink::File(_))
    }

    /// Writes the complete artifact. Files go through write-then-rename, so
    /// a failed run never leaves a truncated table behind.
    pub fn write(&self, text: &str) -> Result<(), Failure> {
        match self {
            Sink::Stdout => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::invalid(format!("stdout: {e}"))),
            Sink::File(path) => qhmm_core::io::write_atomic(path, text.as_bytes())
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display()))),
        }
    }
}

/// Shortest round-trip decimal for a float (`inf`/`NaN` spelled by the
/// standard formatter).
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// A CSV artifact under construction: fixed header, comma-joined rows.
pub struct Csv {
    lines: Vec<String>,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Csv {
            lines: vec![header.to_string()],
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn finish(self) -> String {
        self.lines.join("\n") + "\n"
    }
}

/// Pretty JSON with a trailing newline. Field order is the struct's
/// declaration order, fixed across runs.
pub fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}
