//! Result rows, CSV encoding and atomic persistence.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::Verdict;

use super::config::ExperimentConfig;

/// One line of an `ensemble` or `sweep` result file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub model: String,
    pub d: usize,
    pub t: Option<u64>,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub quantity: String,
    pub offset_b: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub bound: Option<f64>,
    pub verdict: Verdict,
    pub n: u64,
    pub seed: u64,
}

/// `"2;0"` for `b = (2, 0)`; empty when the row has no offset.
pub fn format_offset(b: &[i64]) -> String {
    b.iter().map(i64::to_string).collect::<Vec<_>>().join(";")
}

pub fn encode_rows<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Run metadata stored next to each CSV as `<name>.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub git_hash: Option<String>,
    pub wall_clock_seconds: f64,
    pub config: &'a ExperimentConfig,
    pub outputs: Vec<String>,
}

pub fn git_hash() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .stderr(std::process::Stdio::null())
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

pub fn write_sidecar(csv_path: &Path, meta: &Metadata<'_>) -> Result<PathBuf> {
    let path = csv_path.with_extension("json");
    let mut bytes = serde_json::to_vec_pretty(meta)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(path)
}
