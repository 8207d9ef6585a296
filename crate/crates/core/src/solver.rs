//! Options, traces and the outer loop shared by both decentralized solvers.

use std::collections::BTreeMap;

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::early_stop::{EarlyStopMonitor, Observed, StopDecision};
use crate::error::SolverError;
use crate::instance::{g_i, ProblemInstance};
use crate::lifted::LiftedPoint;
use crate::metrics::{centrality, mean_distance, relative_error, MetricRecord};
use crate::network::NetworkLog;
use crate::prox::{submatrix_min_eigenvalue, InnerSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Serial,
    Decentralized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Splitting,
    Admm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Splitting => "splitting",
            Method::Admm => "admm",
        })
    }
}

/// Which of sensor `i`'s two local copies supplies its reported location.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateSource {
    /// The PSD-projection output (`x_{n+i}`, or `U_{n+i}` for ADMM).
    #[default]
    Psd,
    /// The absolute-deviation prox output (`x_i`, or `U_i`).
    Deviation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopOptions {
    pub patience: usize,
    /// When false the monitor only records where it would have stopped and
    /// the solver keeps going.
    pub halt: bool,
}

impl Default for EarlyStopOptions {
    fn default() -> Self {
        Self {
            patience: 100,
            halt: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub gamma: f64,
    pub alpha: f64,
    pub max_iter: usize,
    pub early_stop: Option<EarlyStopOptions>,
    pub mode: Mode,
    pub seed: u64,
    pub inner: InnerSchedule,
    pub estimate_source: EstimateSource,
    /// Stop when the relative fixed-point residual drops to this value.
    pub fixed_point_tol: Option<f64>,
}

impl SolverOptions {
    pub fn splitting() -> Self {
        Self {
            gamma: 0.999,
            alpha: 10.0,
            max_iter: 3000,
            early_stop: None,
            mode: Mode::Serial,
            seed: 0,
            inner: InnerSchedule::default(),
            estimate_source: EstimateSource::Psd,
            fixed_point_tol: Some(1e-6),
        }
    }

    pub fn admm() -> Self {
        Self {
            alpha: 150.0,
            ..Self::splitting()
        }
    }

    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Splitting => Self::splitting(),
            Method::Admm => Self::admm(),
        }
    }

    pub fn validate(&self, method: Method) -> Result<(), SolverError> {
        if method == Method::Splitting && !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SolverError::Options(format!("gamma = {} is outside (0, 1)", self.gamma)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(SolverError::Options(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(self.inner.rho > 0.0) || !(self.inner.tol_min > 0.0) {
            return Err(SolverError::Options("inner rho and tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    MaxIterations,
    FixedPoint { residual: f64 },
    EarlyStop { best_iteration: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopOutcome {
    /// Iteration at which the monitor fired, if it did.
    pub fired_at: Option<usize>,
    /// Iteration whose estimate is reported (the objective minimizer when
    /// the monitor fired, otherwise the last iteration).
    pub best_iteration: usize,
    pub best_objective: f64,
    pub estimate: DMatrix<f64>,
}

/// Optimality evidence at the final iterate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `max_i ‖x_i − x̄‖ / ‖x̄‖`
    pub consensus_relative: f64,
    /// `‖Σ_i y_i‖ / ‖x̄‖` with `y = v + (L − I)x`; splitting only.
    pub dual_sum_relative: Option<f64>,
    pub fixed_point_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub method: Method,
    pub mode: Mode,
    pub records: Vec<MetricRecord>,
    /// Cumulative `(messages, bytes)` after each recorded iteration.
    pub comm: Vec<(u64, u64)>,
    pub termination: Termination,
    pub iterations: usize,
    /// Reported solution: the early-stop minimizer when the solver halted on
    /// it, otherwise the last iterate.
    pub estimate: DMatrix<f64>,
    pub last_estimate: DMatrix<f64>,
    pub early_stop: Option<EarlyStopOutcome>,
    pub certificate: Certificate,
    pub network: Option<NetworkLog>,
    pub metadata: BTreeMap<String, f64>,
}

/// Quantities an observer with global visibility reads off a solver state.
pub(crate) struct Snapshot {
    pub estimate: DMatrix<f64>,
    pub record: MetricRecord,
    pub xbar_norm: f64,
}

/// Builds the metric record from each sensor's two local copies.
///
/// The objective is `Σ_i g_i` evaluated on sensor `i`'s PSD-projection copy,
/// and the PSD residual on its deviation-prox copy.
pub(crate) fn observe(
    instance: &ProblemInstance,
    deviation_copies: &[LiftedPoint],
    psd_copies: &[LiftedPoint],
    source: EstimateSource,
    iteration: usize,
) -> Snapshot {
    let n = instance.n();
    let d = instance.d();
    let held = match source {
        EstimateSource::Psd => psd_copies,
        EstimateSource::Deviation => deviation_copies,
    };
    let estimate = DMatrix::from_fn(n, d, |i, a| held[i].x[(i, a)]);
    let objective: f64 = (0..n).map(|i| g_i(instance, i, &psd_copies[i])).sum();
    let psd_residual = (0..n)
        .map(|i| (-submatrix_min_eigenvalue(instance, i, &deviation_copies[i])).max(0.0))
        .fold(0.0, f64::max);
    let all = || deviation_copies.iter().chain(psd_copies.iter());
    let xbar = LiftedPoint::mean(all()).expect("at least one sensor");
    let consensus_residual = all().map(|p| p.sub(&xbar).norm()).fold(0.0, f64::max);

    let truth = instance.truth();
    let record = MetricRecord {
        iteration,
        objective,
        rel_error: truth.and_then(|t| relative_error(&estimate, t).ok()),
        centrality: centrality(&estimate, instance.anchors()).ok(),
        mean_distance: truth.and_then(|t| mean_distance(&estimate, t).ok()),
        psd_residual,
        consensus_residual,
    };
    Snapshot {
        estimate,
        record,
        xbar_norm: xbar.norm(),
    }
}

/// One decentralized method as seen by the outer loop.
pub(crate) trait Engine {
    fn step(&mut self, instance: &ProblemInstance, options: &SolverOptions) -> Result<(), SolverError>;
    fn snapshot(&self, instance: &ProblemInstance, options: &SolverOptions, iteration: usize) -> Snapshot;
    /// Relative fixed-point residual of the last step.
    fn fixed_point_residual(&self) -> f64;
    fn dual_sum(&self) -> Option<f64>;
    fn network_log(&self) -> Option<NetworkLog>;
}

pub(crate) fn drive<E: Engine>(
    engine: &mut E,
    instance: &ProblemInstance,
    options: &SolverOptions,
    method: Method,
) -> Result<SolverTrace, SolverError> {
    options.validate(method)?;
    let mut records = Vec::new();
    let mut comm = Vec::new();
    let mut monitor = options.early_stop.as_ref().map(|e| EarlyStopMonitor::new(e.patience));
    let mut best: Option<(usize, f64, DMatrix<f64>)> = None;
    let mut fired_at = None;
    let mut termination = Termination::MaxIterations;
    let mut last: Option<Snapshot> = None;
    let mut iterations = 0;

    for k in 1..=options.max_iter {
        engine.step(instance, options)?;
        iterations = k;
        let snap = engine.snapshot(instance, options, k);
        let log = engine.network_log();
        comm.push(log.as_ref().map_or((0, 0), |l| (l.messages, l.bytes)));
        records.push(snap.record.clone());

        let mut halt = false;
        if let Some(mon) = monitor.as_mut() {
            let (observed, decision) = mon.observe(snap.record.objective);
            if observed == Observed::NewBest && fired_at.is_none() {
                best = Some((k, snap.record.objective, snap.estimate.clone()));
            }
            if fired_at.is_none() {
                if let StopDecision::Stop { best_index, .. } = decision {
                    fired_at = Some(k);
                    info!("early-stop monitor fired at iteration {k}, minimizer at {}", best_index + 1);
                    if options.early_stop.as_ref().is_some_and(|e| e.halt) {
                        termination = Termination::EarlyStop {
                            best_iteration: best_index + 1,
                        };
                        halt = true;
                    }
                }
            }
        }
        let fp = engine.fixed_point_residual();
        last = Some(snap);
        if halt {
            break;
        }
        if let Some(tol) = options.fixed_point_tol {
            if fp <= tol {
                termination = Termination::FixedPoint { residual: fp };
                break;
            }
        }
    }

    let last = match last {
        Some(s) => s,
        None => engine.snapshot(instance, options, 0),
    };
    let early_stop = options.early_stop.as_ref().map(|_| match (&fired_at, &best) {
        (Some(_), Some((k, obj, est))) => EarlyStopOutcome {
            fired_at,
            best_iteration: *k,
            best_objective: *obj,
            estimate: est.clone(),
        },
        _ => EarlyStopOutcome {
            fired_at: None,
            best_iteration: iterations,
            best_objective: last.record.objective,
            estimate: last.estimate.clone(),
        },
    });
    let estimate = match (&termination, &early_stop) {
        (Termination::EarlyStop { .. }, Some(es)) => es.estimate.clone(),
        _ => last.estimate.clone(),
    };
    let denom = last.xbar_norm.max(f64::MIN_POSITIVE);
    let certificate = Certificate {
        consensus_relative: last.record.consensus_residual / denom,
        dual_sum_relative: engine.dual_sum().map(|s| s / denom),
        fixed_point_residual: engine.fixed_point_residual(),
    };
    Ok(SolverTrace {
        method,
        mode: options.mode,
        records,
        comm,
        termination,
        iterations,
        estimate,
        last_estimate: last.estimate,
        early_stop,
        certificate,
        network: engine.network_log(),
        metadata: BTreeMap::new(),
    })
}
