//! CSV and JSON output for traces.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoherence::{CoherenceTrace, PulseSequence, QuadratureSettings};
use crate::error::Result;
use crate::spectral::BathSpec;

/// Crate version recorded in metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a value with 17 significant digits.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,gamma,coherence` rows.
pub fn trace_csv(trace: &CoherenceTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str("t,gamma,coherence\n");
    for ((t, g), c) in trace.grid.iter().zip(&trace.gamma).zip(&trace.coherence) {
        let _ = writeln!(out, "{},{},{}", full_precision(*t), full_precision(*g), full_precision(*c));
    }
    out
}

/// Arbitrary numeric columns under a header.
pub fn columns_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| full_precision(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// `index,t` rows for a pulse sequence.
pub fn sequence_csv(seq: &PulseSequence) -> String {
    let mut out = String::from("index,t\n");
    for (i, t) in seq.times().iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, full_precision(*t));
    }
    out
}

/// Provenance written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub bath: BathSpec,
    pub sequence: PulseSequence,
    pub settings: QuadratureSettings,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl TraceMetadata {
    pub fn new(trace: &CoherenceTrace, settings: &QuadratureSettings, with_timestamp: bool) -> Self {
        Self {
            bath: trace.bath.clone(),
            sequence: trace.sequence.clone(),
            settings: *settings,
            version: VERSION.to_string(),
            timestamp: with_timestamp.then(unix_seconds),
        }
    }
}

/// Seconds since the Unix epoch.
pub fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_trace(
    dir: &Path,
    stem: &str,
    trace: &CoherenceTrace,
    settings: &QuadratureSettings,
    with_timestamp: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), trace_csv(trace))?;
    let meta = TraceMetadata::new(trace, settings, with_timestamp);
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}
