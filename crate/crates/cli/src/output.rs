//! CSV files written by the experiments and the `solve` command.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use snl_core::solver::SolverTrace;

use crate::ExperimentError;

pub const SUMMARY_SCHEMA: &str = "snl-summary/1";

/// One value in the long-format summary files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema: String,
    pub experiment: String,
    /// For example `splitting/cold` or `trial`.
    pub series: String,
    /// Iteration number or trial index, depending on the series.
    pub index: u64,
    pub statistic: String,
    pub value: f64,
}

impl SummaryRow {
    pub fn new(experiment: &str, series: &str, index: u64, statistic: &str, value: f64) -> Self {
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            experiment: experiment.to_string(),
            series: series.to_string(),
            index,
            statistic: statistic.to_string(),
            value,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let empty = file.metadata().map_err(|e| io_err(path, e))?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(empty).from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_summary(path: &Path) -> Result<Vec<SummaryRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: SummaryRow = rec.map_err(|e| io_err(path, e))?;
        if row.schema != SUMMARY_SCHEMA {
            return Err(io_err(path, format!("unsupported schema {}", row.schema)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One line of a per-iteration solver trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub rel_error: Option<f64>,
    pub mean_distance: Option<f64>,
    pub centrality: Option<f64>,
    pub psd_residual: f64,
    pub consensus_residual: f64,
    pub messages: u64,
    pub bytes: u64,
}

pub fn trace_rows(trace: &SolverTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .zip(&trace.comm)
        .map(|(r, &(messages, bytes))| TraceRow {
            iteration: r.iteration,
            objective: r.objective,
            rel_error: r.rel_error,
            mean_distance: r.mean_distance,
            centrality: r.centrality,
            psd_residual: r.psd_residual,
            consensus_residual: r.consensus_residual,
            messages,
            bytes,
        })
        .collect()
}

pub fn write_trace(path: &Path, trace: &SolverTrace) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in trace_rows(trace) {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| io_err(path, e)))
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}
