//! Loading pulsed-EPR traces from disk.

use std::fs;
use std::path::{Path, PathBuf};

use qudit_core::pulse::DecayTrace;

use crate::run::RunError;

#[derive(Debug, Default)]
pub struct IngestReport {
    /// Parsed traces, ascending in field (ties broken by path).
    pub traces: Vec<(PathBuf, DecayTrace)>,
    /// Files that could not be read or parsed, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

impl IngestReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

pub fn read_trace(path: &Path) -> Result<DecayTrace, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    DecayTrace::from_csv(&text).map_err(|e| e.to_string())
}

/// Parse every `*.csv` file in `dir`. Bad files are reported individually.
pub fn ingest_trace_dir(dir: &Path) -> Result<IngestReport, RunError> {
    let entries = fs::read_dir(dir).map_err(|e| RunError::MissingData(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    if paths.is_empty() {
        return Err(RunError::MissingData(format!("no .csv trace files in {}", dir.display())));
    }
    paths.sort();
    let mut report = IngestReport::default();
    for path in paths {
        match read_trace(&path) {
            Ok(trace) => report.traces.push((path, trace)),
            Err(reason) => report.failures.push((path, reason)),
        }
    }
    report.traces.sort_by(|a, b| a.1.field.total_cmp(&b.1.field).then_with(|| a.0.cmp(&b.0)));
    Ok(report)
}

/// A single file, or every trace in a directory.
pub fn ingest_path(path: &Path) -> Result<IngestReport, RunError> {
    if path.is_dir() {
        return ingest_trace_dir(path);
    }
    if !path.exists() {
        return Err(RunError::MissingData(format!("{} does not exist", path.display())));
    }
    let mut report = IngestReport::default();
    match read_trace(path) {
        Ok(trace) => report.traces.push((path.to_path_buf(), trace)),
        Err(reason) => report.failures.push((path.to_path_buf(), reason)),
    }
    Ok(report)
}
