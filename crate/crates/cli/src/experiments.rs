//! Seeded batch experiments: method comparison with cold and warm starts,
//! the early-termination study and the centrality trace.
//!
//! Trials run in parallel; every result is collected in trial order, so the
//! outputs depend only on the configuration.

use std::fmt;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use snl_core::admm::{run_admm_from, warm_start_admm_with, init_cold_admm};
use snl_core::design::{two_block_params, MatrixParams};
use snl_core::instance::{build_adjacency, generate_instance};
use snl_core::metrics::{centrality, mean_distance};
use snl_core::solver::{EarlyStopOptions, Method, SolverTrace};
use snl_core::splitting::{init_cold_with, perturb_truth, run, warm_start_v_with};
use snl_core::ProblemInstance;

use crate::config::ExperimentConfig;
use crate::output::{append_summary, write_text, SummaryRow};
use crate::plot::{Chart, Series};
use crate::stats::{histogram, mean, median, quartiles, wilson_interval, Histogram};
use crate::ExperimentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    Cold,
    Warm,
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Start::Cold => "cold",
            Start::Warm => "warm",
        })
    }
}

pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub instance: ProblemInstance,
    pub params: MatrixParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

pub fn prepare_trial(cfg: &ExperimentConfig, index: usize) -> Result<Trial, ExperimentError> {
    let seed = cfg.seed(index);
    let instance = generate_instance(&cfg.instance, seed).map_err(|e| ExperimentError::Trial(e.to_string()))?;
    let params =
        two_block_params(&build_adjacency(&instance), 1e-12).map_err(|e| ExperimentError::Trial(e.to_string()))?;
    Ok(Trial {
        index,
        seed,
        instance,
        params,
    })
}

/// Runs `method` on a trial from a cold start or from `(X̃, X̃X̃ᵀ)` with
/// `X̃` the perturbed truth.
pub fn run_method(
    cfg: &ExperimentConfig,
    trial: &Trial,
    method: Method,
    start: Start,
    early_stop: Option<EarlyStopOptions>,
    max_iter: usize,
) -> Result<SolverTrace, ExperimentError> {
    let mut opts = cfg.options(method);
    opts.max_iter = max_iter;
    opts.early_stop = early_stop;
    opts.seed = trial.seed;
    let inst = &trial.instance;
    let core = |e: snl_core::SolverError| ExperimentError::Trial(e.to_string());
    let x_tilde = match start {
        Start::Cold => None,
        Start::Warm => {
            let sd = cfg
                .warm_start
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("warm start requested without a warm_start spec".into()))?
                .sd;
            Some(perturb_truth(inst, sd, trial.seed).map_err(core)?)
        }
    };
    match method {
        Method::Splitting => {
            let state = match &x_tilde {
                None => init_cold_with(inst, &trial.params, &opts.inner),
                Some(x) => warm_start_v_with(inst, &trial.params, x, &opts.inner),
            }
            .map_err(core)?;
            run(inst, &trial.params, &opts, state).map_err(core)
        }
        Method::Admm => {
            let state = match &x_tilde {
                None => init_cold_admm(inst, &opts.inner),
                Some(x) => warm_start_admm_with(inst, x, &opts.inner).map_err(core)?,
            };
            run_admm_from(inst, &opts, state).map_err(core)
        }
    }
}

/// Per-iteration metric of a trace, padded with its last value up to `len`
/// when the solver stopped early.
fn padded(trace: &SolverTrace, len: usize, f: impl Fn(&snl_core::metrics::MetricRecord) -> Option<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = trace
        .records
        .iter()
        .take(len)
        .map(|r| f(r).unwrap_or(f64::NAN))
        .collect();
    let last = v.last().copied().unwrap_or(f64::NAN);
    v.resize(len, last);
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSeries {
    pub method: Method,
    pub start: Start,
    pub rel_error: Vec<f64>,
    pub objective: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRuns {
    pub trial: usize,
    pub seed: u64,
    pub series: Vec<RunSeries>,
}

impl TrialRuns {
    pub fn get(&self, method: Method, start: Start) -> Option<&RunSeries> {
        self.series.iter().find(|s| s.method == method && s.start == start)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSummary {
    pub method: Method,
    pub start: Start,
    pub q25: Vec<f64>,
    pub median: Vec<f64>,
    pub q75: Vec<f64>,
}

impl SeriesSummary {
    pub fn label(&self) -> String {
        format!("{}/{}", self.method, self.start)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonResult {
    pub trials: Vec<TrialRuns>,
    pub failures: Vec<TrialFailure>,
    pub summaries: Vec<SeriesSummary>,
}

impl ComparisonResult {
    pub fn summary(&self, method: Method, start: Start) -> Option<&SeriesSummary> {
        self.summaries.iter().find(|s| s.method == method && s.start == start)
    }
}

fn collect_trials<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(&Trial) -> Result<T, ExperimentError> + Sync,
) -> Result<(Vec<(usize, u64, T)>, Vec<TrialFailure>), ExperimentError> {
    let results: Vec<(usize, u64, Result<T, ExperimentError>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.seed(t);
            (t, seed, prepare_trial(cfg, t).and_then(|trial| f(&trial)))
        })
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (trial, seed, r) in results {
        match r {
            Ok(v) => ok.push((trial, seed, v)),
            Err(ExperimentError::Config(m)) => return Err(ExperimentError::Config(m)),
            Err(e) => {
                warn!("trial {trial} (seed {seed}) excluded: {e}");
                failures.push(TrialFailure {
                    trial,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }
    if ok.is_empty() {
        return Err(ExperimentError::NoTrials(failures.len()));
    }
    Ok((ok, failures))
}

fn starts(cfg: &ExperimentConfig) -> Vec<Start> {
    if cfg.warm_start.is_some() {
        vec![Start::Cold, Start::Warm]
    } else {
        vec![Start::Cold]
    }
}

/// Runs every configured method from each start on every trial and
/// summarizes the relative error per iteration by median and quartiles.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonResult, ExperimentError> {
    cfg.validate()?;
    let len = cfg.iterations;
    let (ok, failures) = collect_trials(cfg, |trial| {
        let mut series = Vec::new();
        for &method in &cfg.methods {
            for start in starts(cfg) {
                let trace = run_method(cfg, trial, method, start, None, len)?;
                series.push(RunSeries {
                    method,
                    start,
                    rel_error: padded(&trace, len, |r| r.rel_error),
                    objective: padded(&trace, len, |r| Some(r.objective)),
                });
            }
        }
        Ok(series)
    })?;
    let trials: Vec<TrialRuns> = ok
        .into_iter()
        .map(|(trial, seed, series)| TrialRuns { trial, seed, series })
        .collect();

    let mut summaries = Vec::new();
    for &method in &cfg.methods {
        for start in starts(cfg) {
            let mut s = SeriesSummary {
                method,
                start,
                q25: Vec::with_capacity(len),
                median: Vec::with_capacity(len),
                q75: Vec::with_capacity(len),
            };
            for k in 0..len {
                let col: Vec<f64> = trials
                    .iter()
                    .filter_map(|t| t.get(method, start).map(|r| r.rel_error[k]))
                    .collect();
                let (a, b, c) = quartiles(&col).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
                s.q25.push(a);
                s.median.push(b);
                s.q75.push(c);
            }
            summaries.push(s);
        }
    }
    let result = ComparisonResult {
        trials,
        failures,
        summaries,
    };
    if let Some(dir) = cfg.resolved_output_dir() {
        write_comparison(&result, cfg, &dir)?;
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReach {
    pub trial: usize,
    pub seed: u64,
    pub plateau: f64,
    /// First iteration (1-based) at which each run is within the band.
    pub reach: Vec<(Method, Start, Option<usize>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachAnalysis {
    pub band: f64,
    pub window: usize,
    pub trials: Vec<TrialReach>,
    /// Median reach iteration per run kind; runs that never reach count as
    /// infinitely late.
    pub medians: Vec<(Method, Start, f64)>,
}

impl ReachAnalysis {
    pub fn median(&self, method: Method, start: Start) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.0 == method && m.1 == start)
            .map(|m| m.2)
    }
}

/// First iteration whose value is at most `threshold`.
pub fn first_reach(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|&v| v <= threshold).map(|k| k + 1)
}

/// Each trial's plateau is the median relative error of its cold splitting
/// run over the last `window` iterations.
pub fn reach_analysis(result: &ComparisonResult, window: usize, band: f64) -> Result<ReachAnalysis, ExperimentError> {
    let mut trials = Vec::new();
    for t in &result.trials {
        let cold = t
            .get(Method::Splitting, Start::Cold)
            .ok_or_else(|| ExperimentError::Config("plateau needs a cold splitting run".into()))?;
        let tail = &cold.rel_error[cold.rel_error.len().saturating_sub(window.max(1))..];
        let plateau = median(tail).unwrap_or(f64::NAN);
        let reach = t
            .series
            .iter()
            .map(|s| (s.method, s.start, first_reach(&s.rel_error, band * plateau)))
            .collect();
        trials.push(TrialReach {
            trial: t.trial,
            seed: t.seed,
            plateau,
            reach,
        });
    }
    let mut medians = Vec::new();
    for s in &result.summaries {
        let vals: Vec<f64> = trials
            .iter()
            .filter_map(|t| t.reach.iter().find(|r| r.0 == s.method && r.1 == s.start))
            .map(|r| r.2.map_or(f64::INFINITY, |k| k as f64))
            .collect();
        medians.push((s.method, s.start, median(&vals).unwrap_or(f64::NAN)));
    }
    Ok(ReachAnalysis {
        band,
        window,
        trials,
        medians,
    })
}

fn fresh(path: &Path) -> Result<(), ExperimentError> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(ExperimentError::Io(format!("{}: {e}", path.display()))),
    }
}

pub fn write_comparison(result: &ComparisonResult, cfg: &ExperimentConfig, dir: &Path) -> Result<(), ExperimentError> {
    let csv_path = dir.join("comparison.csv");
    fresh(&csv_path)?;
    let mut rows = Vec::new();
    for s in &result.summaries {
        let label = s.label();
        for k in 0..s.median.len() {
            let it = (k + 1) as u64;
            rows.push(SummaryRow::new("comparison", &label, it, "q25", s.q25[k]));
            rows.push(SummaryRow::new("comparison", &label, it, "median", s.median[k]));
            rows.push(SummaryRow::new("comparison", &label, it, "q75", s.q75[k]));
        }
    }
    if cfg.warm_start.is_some() && cfg.methods.contains(&Method::Splitting) {
        let reach = reach_analysis(result, cfg.plateau_window, cfg.reach_band)?;
        for (m, st, v) in &reach.medians {
            rows.push(SummaryRow::new("comparison", &format!("{m}/{st}"), 0, "median_reach", *v));
        }
    }
    for f in &result.failures {
        rows.push(SummaryRow::new("comparison", "failed_trial", f.trial as u64, "seed", f.seed as f64));
    }
    append_summary(&csv_path, &rows)?;

    for start in starts(cfg) {
        let chart = Chart {
            title: format!("Relative error, {start} start ({} trials)", result.trials.len()),
            x_label: "iteration".into(),
            y_label: "relative error".into(),
            log_y: true,
            series: result
                .summaries
                .iter()
                .filter(|s| s.start == start)
                .map(|s| Series {
                    name: s.method.to_string(),
                    points: s.median.iter().enumerate().map(|(k, &v)| ((k + 1) as f64, v)).collect(),
                    band: Some(
                        (0..s.median.len())
                            .map(|k| ((k + 1) as f64, s.q25[k], s.q75[k]))
                            .collect(),
                    ),
                })
                .collect(),
            reference: None,
        };
        write_text(&dir.join(format!("comparison_{start}.svg")), &chart.to_svg())?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EarlyStopTrial {
    pub trial: usize,
    pub seed: u64,
    pub fired_at: Option<usize>,
    pub best_iteration: usize,
    pub iterations: usize,
    pub mean_distance_early: f64,
    pub mean_distance_converged: f64,
    pub centrality_early: f64,
    pub centrality_converged: f64,
}

impl EarlyStopTrial {
    pub fn early_wins(&self) -> bool {
        self.mean_distance_early < self.mean_distance_converged
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopStudy {
    pub trials: Vec<EarlyStopTrial>,
    pub failures: Vec<TrialFailure>,
    pub wins: usize,
    pub win_fraction: f64,
    /// 95% Wilson interval for the win fraction.
    pub interval: (f64, f64),
    pub median_distance_early: f64,
    pub median_distance_converged: f64,
    pub median_centrality_early: f64,
    pub median_centrality_converged: f64,
    /// `mean_distance(early) − mean_distance(converged)` per trial.
    pub paired_differences: Vec<f64>,
    pub histogram: Option<Histogram>,
}

/// Runs splitting once per trial with the monitor in record-only mode, so
/// the early-stop minimizer and the converged iterate come from the same
/// trajectory.
pub fn run_early_termination_study(cfg: &ExperimentConfig) -> Result<EarlyStopStudy, ExperimentError> {
    cfg.validate()?;
    let monitor = EarlyStopOptions {
        patience: cfg.early_stop.patience,
        halt: false,
    };
    let max_iter = cfg.options(Method::Splitting).max_iter;
    let (ok, failures) = collect_trials(cfg, |trial| {
        let trace = run_method(cfg, trial, Method::Splitting, Start::Cold, Some(monitor.clone()), max_iter)?;
        let truth = trial
            .instance
            .truth()
            .ok_or_else(|| ExperimentError::Trial("instance has no ground truth".into()))?;
        let es = trace
            .early_stop
            .as_ref()
            .ok_or_else(|| ExperimentError::Trial("monitor outcome missing".into()))?;
        let metric = |r: Result<f64, snl_core::MetricError>| r.map_err(|e| ExperimentError::Trial(e.to_string()));
        let anchors = trial.instance.anchors();
        Ok(EarlyStopTrial {
            trial: trial.index,
            seed: trial.seed,
            fired_at: es.fired_at,
            best_iteration: es.best_iteration,
            iterations: trace.iterations,
            mean_distance_early: metric(mean_distance(&es.estimate, truth))?,
            mean_distance_converged: metric(mean_distance(&trace.last_estimate, truth))?,
            centrality_early: metric(centrality(&es.estimate, anchors))?,
            centrality_converged: metric(centrality(&trace.last_estimate, anchors))?,
        })
    })?;
    let trials: Vec<EarlyStopTrial> = ok.into_iter().map(|(_, _, t)| t).collect();
    let wins = trials.iter().filter(|t| t.early_wins()).count();
    let col = |f: fn(&EarlyStopTrial) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
    let paired: Vec<f64> = trials
        .iter()
        .map(|t| t.mean_distance_early - t.mean_distance_converged)
        .collect();
    let study = EarlyStopStudy {
        wins,
        win_fraction: wins as f64 / trials.len() as f64,
        interval: wilson_interval(wins, trials.len()).expect("at least one trial"),
        median_distance_early: median(&col(|t| t.mean_distance_early)).unwrap_or(f64::NAN),
        median_distance_converged: median(&col(|t| t.mean_distance_converged)).unwrap_or(f64::NAN),
        median_centrality_early: median(&col(|t| t.centrality_early)).unwrap_or(f64::NAN),
        median_centrality_converged: median(&col(|t| t.centrality_converged)).unwrap_or(f64::NAN),
        histogram: histogram(&paired, 20),
        paired_differences: paired,
        trials,
        failures,
    };
    if let Some(dir) = cfg.resolved_output_dir() {
        write_early_stop(&study, &dir)?;
    }
    Ok(study)
}

pub fn write_early_stop(study: &EarlyStopStudy, dir: &Path) -> Result<(), ExperimentError> {
    let path = dir.join("early_stop.csv");
    fresh(&path)?;
    let mut rows = Vec::new();
    for t in &study.trials {
        let i = t.trial as u64;
        rows.push(SummaryRow::new("early-stop", "trial", i, "seed", t.seed as f64));
        rows.push(SummaryRow::new(
            "early-stop",
            "trial",
            i,
            "fired_at",
            t.fired_at.map_or(f64::NAN, |k| k as f64),
        ));
        rows.push(SummaryRow::new("early-stop", "trial", i, "best_iteration", t.best_iteration as f64));
        rows.push(SummaryRow::new("early-stop", "trial", i, "mean_distance_early", t.mean_distance_early));
        rows.push(SummaryRow::new("early-stop", "trial", i, "mean_distance_converged", t.mean_distance_converged));
        rows.push(SummaryRow::new("early-stop", "trial", i, "centrality_early", t.centrality_early));
        rows.push(SummaryRow::new("early-stop", "trial", i, "centrality_converged", t.centrality_converged));
    }
    let s = |name: &str, v: f64| SummaryRow::new("early-stop", "summary", 0, name, v);
    rows.push(s("wins", study.wins as f64));
    rows.push(s("win_fraction", study.win_fraction));
    rows.push(s("win_fraction_low95", study.interval.0));
    rows.push(s("win_fraction_high95", study.interval.1));
    rows.push(s("median_distance_early", study.median_distance_early));
    rows.push(s("median_distance_converged", study.median_distance_converged));
    rows.push(s("median_centrality_early", study.median_centrality_early));
    rows.push(s("median_centrality_converged", study.median_centrality_converged));
    if let Some(h) = &study.histogram {
        for (b, &c) in h.counts.iter().enumerate() {
            rows.push(SummaryRow::new("early-stop", "histogram", b as u64, "lower_edge", h.edges[b]));
            rows.push(SummaryRow::new("early-stop", "histogram", b as u64, "count", c as f64));
        }
    }
    append_summary(&path, &rows)?;

    if let Some(h) = &study.histogram {
        let mut pts = Vec::new();
        for (b, &c) in h.counts.iter().enumerate() {
            pts.push((h.edges[b], c as f64));
            pts.push((h.edges[b + 1], c as f64));
        }
        let chart = Chart {
            title: format!(
                "Early stop minus converged mean distance ({} of {} trials favor early stop)",
                study.wins,
                study.trials.len()
            ),
            x_label: "paired difference in mean distance".into(),
            y_label: "trials".into(),
            log_y: false,
            series: vec![Series {
                name: "histogram".into(),
                points: pts,
                band: None,
            }],
            reference: None,
        };
        write_text(&dir.join("early_stop.svg"), &chart.to_svg())?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralityTrace {
    /// Mean centrality over trials at each iteration.
    pub mean: Vec<f64>,
    /// Mean centrality of the true locations.
    pub truth: f64,
    pub trials: usize,
    pub failures: Vec<TrialFailure>,
}

impl CentralityTrace {
    /// Whether the trace rises above its final value at some point.
    pub fn peaks_before_end(&self) -> bool {
        let last = *self.mean.last().unwrap_or(&f64::NAN);
        self.mean.iter().any(|&v| v > last)
    }
}

pub fn run_centrality_trace(cfg: &ExperimentConfig) -> Result<CentralityTrace, ExperimentError> {
    cfg.validate()?;
    let len = cfg.iterations;
    let (ok, failures) = collect_trials(cfg, |trial| {
        let trace = run_method(cfg, trial, Method::Splitting, Start::Cold, None, len)?;
        let truth = trial
            .instance
            .truth()
            .ok_or_else(|| ExperimentError::Trial("instance has no ground truth".into()))?;
        let truth_c =
            centrality(truth, trial.instance.anchors()).map_err(|e| ExperimentError::Trial(e.to_string()))?;
        Ok((padded(&trace, len, |r| r.centrality), truth_c))
    })?;
    let per_iter: Vec<f64> = (0..len)
        .map(|k| {
            let col: Vec<f64> = ok.iter().map(|(_, _, (c, _))| c[k]).collect();
            mean(&col).unwrap_or(f64::NAN)
        })
        .collect();
    let truths: Vec<f64> = ok.iter().map(|(_, _, (_, t))| *t).collect();
    let result = CentralityTrace {
        mean: per_iter,
        truth: mean(&truths).unwrap_or(f64::NAN),
        trials: ok.len(),
        failures,
    };
    if let Some(dir) = cfg.resolved_output_dir() {
        write_centrality(&result, &dir)?;
    }
    Ok(result)
}

pub fn write_centrality(trace: &CentralityTrace, dir: &Path) -> Result<(), ExperimentError> {
    let path = dir.join("centrality.csv");
    fresh(&path)?;
    let mut rows: Vec<SummaryRow> = trace
        .mean
        .iter()
        .enumerate()
        .map(|(k, &v)| SummaryRow::new("centrality", "splitting/cold", (k + 1) as u64, "mean", v))
        .collect();
    rows.push(SummaryRow::new("centrality", "truth", 0, "mean", trace.truth));
    append_summary(&path, &rows)?;
    let chart = Chart {
        title: format!("Mean centrality over {} trials", trace.trials),
        x_label: "iteration".into(),
        y_label: "centrality".into(),
        log_y: false,
        series: vec![Series {
            name: "splitting".into(),
            points: trace.mean.iter().enumerate().map(|(k, &v)| ((k + 1) as f64, v)).collect(),
            band: None,
        }],
        reference: Some(("truth".into(), trace.truth)),
    };
    write_text(&dir.join("centrality.svg"), &chart.to_svg())
}
