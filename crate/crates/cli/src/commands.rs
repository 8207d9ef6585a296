//! Work behind the `generate`, `design`, `solve` and `validate` commands.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;
use snl_core::admm::{init_cold_admm, run_admm_from, warm_start_admm_with};
use snl_core::design::{
    sinkhorn_knopp_decentralized, two_block_params, validate_params, MatrixParams, ParamsFile,
};
use snl_core::instance::build_adjacency;
use snl_core::solver::{Certificate, Termination};
use snl_core::splitting::{init_cold_with, perturb_truth, run, warm_start_v_with};
use snl_core::{Adjacency, Method, Mode, ProblemInstance, SolverOptions, SolverTrace};

use crate::ExperimentError;

/// Residual tolerance for the checks stored alongside a design.
pub const CHECK_TOL: f64 = 1e-8;

fn io(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

fn invalid(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    ProblemInstance::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Parses an edge list: one `i j` pair per line, 0-based. Blank lines and
/// lines starting with `#` are skipped. The node count is `n` when given,
/// otherwise one more than the largest index.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Adjacency, ExperimentError> {
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = parts[..] else {
            return Err(invalid(format!("edge list line {}: expected two indices", k + 1)));
        };
        let parse = |s: &str| {
            usize::from_str(s).map_err(|e| invalid(format!("edge list line {}: {e}", k + 1)))
        };
        edges.push((parse(a)?, parse(b)?));
    }
    let n = n.unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0));
    Adjacency::from_edges(n, &edges).map_err(invalid)
}

pub fn load_adjacency(
    instance: Option<&Path>,
    edges: Option<&Path>,
    n: Option<usize>,
) -> Result<Adjacency, ExperimentError> {
    match (instance, edges) {
        (Some(p), None) => Ok(build_adjacency(&load_instance(p)?)),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| io(p, e))?;
            parse_edge_list(&text, n)
        }
        _ => Err(invalid("give exactly one of --instance and --edges")),
    }
}

/// A design and the number of balancing rounds when it was built by
/// message passing.
pub struct Design {
    pub params: MatrixParams,
    pub file: ParamsFile,
    pub rounds: Option<usize>,
}

pub fn design(adj: &Adjacency, decentralized: bool, rounds: usize, tol: f64) -> Result<Design, ExperimentError> {
    let (params, rounds) = if decentralized {
        let balance = sinkhorn_knopp_decentralized(adj, rounds, tol).map_err(invalid)?;
        (MatrixParams::from_block(&balance.assemble()).map_err(invalid)?, Some(balance.rounds))
    } else {
        (two_block_params(adj, tol).map_err(invalid)?, None)
    };
    let report = validate_params(&params, adj, CHECK_TOL);
    let file = ParamsFile::new(&params, report);
    Ok(Design { params, file, rounds })
}

pub fn load_params(path: &Path) -> Result<MatrixParams, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let file: ParamsFile = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    file.to_params().map_err(invalid)
}

#[derive(Clone, Debug, PartialEq)]
pub enum WarmStart {
    /// Locations read from a JSON array of rows.
    Locations(DMatrix<f64>),
    /// Ground truth plus Gaussian noise of this standard deviation.
    Perturb(f64),
}

impl FromStr for WarmStart {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(sd) = s.strip_prefix("perturb:") {
            let sd: f64 = sd.parse().map_err(|e| invalid(format!("warm start sd: {e}")))?;
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(invalid(format!("warm start sd {sd} must be a nonnegative number")));
            }
            return Ok(WarmStart::Perturb(sd));
        }
        let path = Path::new(s);
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(invalid(format!("{}: rows have different lengths", path.display())));
        }
        Ok(WarmStart::Locations(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])))
    }
}

/// Runs one method on one instance. `params` is required for splitting.
pub fn solve(
    instance: &ProblemInstance,
    params: Option<&MatrixParams>,
    method: Method,
    options: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<SolverTrace, ExperimentError> {
    options.validate(method).map_err(invalid)?;
    let trial = |e: snl_core::SolverError| ExperimentError::Trial(e.to_string());
    let x_tilde = match warm {
        None => None,
        Some(WarmStart::Locations(x)) => Some(x.clone()),
        Some(WarmStart::Perturb(sd)) => Some(perturb_truth(instance, *sd, options.seed).map_err(trial)?),
    };
    match method {
        Method::Splitting => {
            let params = params.ok_or_else(|| invalid("splitting needs matrix parameters"))?;
            let state = match &x_tilde {
                None => init_cold_with(instance, params, &options.inner),
                Some(x) => warm_start_v_with(instance, params, x, &options.inner),
            }
            .map_err(trial)?;
            run(instance, params, options, state).map_err(trial)
        }
        Method::Admm => {
            let state = match &x_tilde {
                None => init_cold_admm(instance, &options.inner),
                Some(x) => warm_start_admm_with(instance, x, &options.inner).map_err(trial)?,
            };
            run_admm_from(instance, options, state).map_err(trial)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EarlyStopSummary {
    pub fired_at: Option<usize>,
    pub best_iteration: usize,
    pub best_objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkSummary {
    pub rounds: u64,
    pub messages: u64,
    pub bytes: u64,
    pub non_edge_messages: usize,
}

/// JSON written by `solve --out`.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub mode: Mode,
    pub iterations: usize,
    pub termination: Termination,
    pub estimate: Vec<Vec<f64>>,
    pub final_objective: Option<f64>,
    pub final_rel_error: Option<f64>,
    pub final_mean_distance: Option<f64>,
    pub certificate: Certificate,
    pub early_stop: Option<EarlyStopSummary>,
    pub network: Option<NetworkSummary>,
    pub metadata: BTreeMap<String, f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl SolveReport {
    pub fn new(trace: &SolverTrace, instance: &ProblemInstance) -> Self {
        let last = trace.records.last();
        let adj = build_adjacency(instance);
        Self {
            method: trace.method,
            mode: trace.mode,
            iterations: trace.iterations,
            termination: trace.termination.clone(),
            estimate: rows(&trace.estimate),
            final_objective: last.map(|r| r.objective),
            final_rel_error: last.and_then(|r| r.rel_error),
            final_mean_distance: last.and_then(|r| r.mean_distance),
            certificate: trace.certificate.clone(),
            early_stop: trace.early_stop.as_ref().map(|e| EarlyStopSummary {
                fired_at: e.fired_at,
                best_iteration: e.best_iteration,
                best_objective: e.best_objective,
            }),
            network: trace.network.as_ref().map(|log| NetworkSummary {
                rounds: log.rounds,
                messages: log.messages,
                bytes: log.bytes,
                non_edge_messages: log.non_edge_pairs(&adj).len(),
            }),
            metadata: trace.metadata.clone(),
        }
    }
}
