//! Matrix-parametrized proximal splitting over the `2n` functions
//! `f_i = g_i` (`i < n`) and `f_{n+i} = δ_i`.
//!
//! One iteration resolves `x = J_{αF}(v + Lx)` in index order and then sets
//! `v ← v − γWx`. Sensor `i` hosts both `f_i` and `f_{n+i}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

use crate::design::MatrixParams;
use crate::error::{SolverError, ProxError};
use crate::graph::Adjacency;
use crate::instance::{build_adjacency, ProblemInstance};
use crate::lifted::LiftedPoint;
use crate::network::{NetworkLog, SimNetwork};
use crate::prox::{build_g_prox_data, delta_prox, g_prox_lenient, GProxData, InnerSchedule};
use crate::rng;
use crate::solver::{drive, observe, Engine, EstimateSource, Method, Mode, Snapshot, SolverOptions, SolverTrace};

#[derive(Clone, Debug)]
pub struct SolverState {
    /// `2n` points with `Σ v_i = 0`.
    pub v: Vec<LiftedPoint>,
    /// Latest prox outputs; zero before the first iteration.
    pub x: Vec<LiftedPoint>,
    pub iteration: usize,
    pub objective_history: Vec<f64>,
    pub gprox: Vec<GProxData>,
    fixed_point_residual: f64,
}

impl SolverState {
    pub fn n(&self) -> usize {
        self.gprox.len()
    }

    /// `Σ_i v_i`, which must stay at zero.
    pub fn v_sum(&self) -> LiftedPoint {
        let p = &self.v[0];
        LiftedPoint::combination(p.n(), p.d(), self.v.iter().map(|v| (1.0, v)))
    }

    pub fn fixed_point_residual(&self) -> f64 {
        self.fixed_point_residual
    }
}

fn check_params(instance: &ProblemInstance, params: &MatrixParams) -> Result<(), SolverError> {
    if params.block_size() != instance.n() {
        return Err(SolverError::Params(format!(
            "parameters are for {} sensors, instance has {}",
            params.block_size(),
            instance.n()
        )));
    }
    Ok(())
}

fn with_v(instance: &ProblemInstance, v: Vec<LiftedPoint>, rho: f64) -> SolverState {
    let n = instance.n();
    SolverState {
        x: vec![LiftedPoint::zeros(n, instance.d()); 2 * n],
        v,
        iteration: 0,
        objective_history: Vec::new(),
        gprox: (0..n).map(|i| build_g_prox_data(instance, i, rho)).collect(),
        fixed_point_residual: f64::INFINITY,
    }
}

/// All `v_i = 0`, with the default inner penalty.
pub fn init_cold(instance: &ProblemInstance, params: &MatrixParams) -> Result<SolverState, SolverError> {
    init_cold_with(instance, params, &InnerSchedule::default())
}

pub fn init_cold_with(
    instance: &ProblemInstance,
    params: &MatrixParams,
    inner: &InnerSchedule,
) -> Result<SolverState, SolverError> {
    check_params(instance, params)?;
    let n = instance.n();
    let v = vec![LiftedPoint::zeros(n, instance.d()); 2 * n];
    Ok(with_v(instance, v, inner.rho))
}

/// `v_i = (X̃, X̃X̃ᵀ)` for the first block and its negation for the second,
/// which is the fixed-point relation with zero subgradients for 2-Block
/// parameters.
pub fn warm_start_v(
    instance: &ProblemInstance,
    params: &MatrixParams,
    x_tilde: &DMatrix<f64>,
) -> Result<SolverState, SolverError> {
    warm_start_v_with(instance, params, x_tilde, &InnerSchedule::default())
}

pub fn warm_start_v_with(
    instance: &ProblemInstance,
    params: &MatrixParams,
    x_tilde: &DMatrix<f64>,
    inner: &InnerSchedule,
) -> Result<SolverState, SolverError> {
    check_params(instance, params)?;
    let n = instance.n();
    let shape = (n, instance.d());
    if x_tilde.shape() != shape {
        return Err(SolverError::Shape {
            expected: shape,
            got: x_tilde.shape(),
        });
    }
    let lifted = LiftedPoint::from_locations(x_tilde);
    let neg = lifted.scaled(-1.0);
    let v = (0..2 * n)
        .map(|i| if i < n { lifted.clone() } else { neg.clone() })
        .collect();
    Ok(with_v(instance, v, inner.rho))
}

/// Ground truth plus independent `N(0, sd²)` noise on every coordinate.
pub fn perturb_truth(instance: &ProblemInstance, sd: f64, seed: u64) -> Result<DMatrix<f64>, SolverError> {
    let truth = instance
        .truth()
        .ok_or_else(|| SolverError::Options("instance has no ground truth to perturb".into()))?;
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(SolverError::Options(format!("invalid standard deviation {sd}")));
    }
    let mut rng = rng::stream(seed, rng::PERTURB_STREAM);
    let normal = Normal::new(0.0, sd).expect("finite nonnegative sd");
    let mut out = truth.clone();
    for r in 0..out.nrows() {
        for c in 0..out.ncols() {
            out[(r, c)] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

fn prox_f(
    state: &mut SolverState,
    instance: &ProblemInstance,
    i: usize,
    input: &LiftedPoint,
    alpha: f64,
    tol: f64,
    max_inner: usize,
) -> Result<LiftedPoint, ProxError> {
    let n = instance.n();
    if i < n {
        g_prox_lenient(&mut state.gprox[i], input, alpha, tol, max_inner)
    } else {
        delta_prox(instance, i - n, input)
    }
}

fn relative_fp(gamma: f64, wx_sq: f64, x_sq: f64) -> f64 {
    gamma * wx_sq.sqrt() / x_sq.sqrt().max(1.0)
}

/// One serial iteration, visiting the `2n` prox evaluations in index order.
pub fn iterate(
    state: &mut SolverState,
    instance: &ProblemInstance,
    params: &MatrixParams,
    options: &SolverOptions,
) -> Result<(), SolverError> {
    check_params(instance, params)?;
    let n = instance.n();
    let d = instance.d();
    let tol = options.inner.tol(state.iteration);
    for i in 0..2 * n {
        let terms = params.l_row(i);
        let input = LiftedPoint::combination(
            n,
            d,
            std::iter::once((1.0, &state.v[i])).chain(terms.iter().map(|&(j, c)| (c, &state.x[j]))),
        );
        let out = prox_f(state, instance, i, &input, options.alpha, tol, options.inner.max_iter)?;
        state.x[i] = out;
    }
    let mut wx_sq = 0.0;
    let wx: Vec<LiftedPoint> = (0..2 * n)
        .map(|i| LiftedPoint::combination(n, d, params.w_row(i).into_iter().map(|(j, c)| (c, &state.x[j]))))
        .collect();
    for (v, w) in state.v.iter_mut().zip(&wx) {
        wx_sq += w.norm_squared();
        v.axpy(-options.gamma, w);
    }
    let x_sq: f64 = state.x.iter().map(LiftedPoint::norm_squared).sum();
    state.fixed_point_residual = relative_fp(options.gamma, wx_sq, x_sq);
    state.iteration += 1;
    Ok(())
}

/// Row `i` of `X̂` from the copy sensor `i` holds.
pub fn sensor_estimates(state: &SolverState, source: EstimateSource) -> DMatrix<f64> {
    let n = state.n();
    let d = state.x[0].d();
    let offset = match source {
        EstimateSource::Psd => n,
        EstimateSource::Deviation => 0,
    };
    DMatrix::from_fn(n, d, |i, a| state.x[offset + i].x[(i, a)])
}

/// Lifted variables each sensor keeps between iterations: its `v` and `x`
/// for both hosted functions.
pub fn persistent_lifted_per_sensor(state: &SolverState) -> usize {
    (state.v.len() + state.x.len()) / state.n()
}

fn dual_sum(state: &SolverState, params: &MatrixParams) -> f64 {
    let n = state.n();
    let d = state.x[0].d();
    let mut total = LiftedPoint::zeros(n, d);
    for i in 0..2 * n {
        let y = LiftedPoint::combination(
            n,
            d,
            std::iter::once((1.0, &state.v[i]))
                .chain(params.l_row(i).into_iter().map(|(j, c)| (c, &state.x[j])))
                .chain(std::iter::once((-1.0, &state.x[i]))),
        );
        total.axpy(1.0, &y);
    }
    total.norm()
}

/// Per-worker communication state for the message-passing mode.
pub struct DecentralizedRuntime {
    net: SimNetwork<LiftedPoint>,
    /// Neighbors' first-block outputs from this iteration's first round.
    block1_inbox: Vec<BTreeMap<usize, Arc<LiftedPoint>>>,
}

impl DecentralizedRuntime {
    pub fn new(instance: &ProblemInstance) -> Self {
        Self::over(build_adjacency(instance))
    }

    pub fn over(adj: Adjacency) -> Self {
        let n = adj.n();
        Self {
            net: SimNetwork::new(adj),
            block1_inbox: vec![BTreeMap::new(); n],
        }
    }

    pub fn log(&self) -> &NetworkLog {
        self.net.log()
    }
}

fn require_two_block(params: &MatrixParams) -> Result<(), SolverError> {
    let n = params.block_size();
    let l = params.l();
    for i in 0..2 * n {
        for j in 0..2 * n {
            let first_block_row = i < n;
            let within_second = i >= n && j >= n;
            if (first_block_row || within_second) && l[(i, j)] != 0.0 {
                return Err(SolverError::Params(
                    "message-passing mode needs 2-Block parameters".into(),
                ));
            }
        }
    }
    Ok(())
}

/// One iteration run as `n` workers. Worker `i` owns `v_i, v_{n+i}, x_i,
/// x_{n+i}` and reads other workers' outputs only from messages: first-block
/// outputs in round A, second-block outputs in round B.
pub fn iterate_decentralized(
    state: &mut SolverState,
    instance: &ProblemInstance,
    params: &MatrixParams,
    options: &SolverOptions,
    rt: &mut DecentralizedRuntime,
) -> Result<(), SolverError> {
    check_params(instance, params)?;
    require_two_block(params)?;
    let n = instance.n();
    let d = instance.d();
    let tol = options.inner.tol(state.iteration);

    // First block: no dependencies.
    for i in 0..n {
        let input = LiftedPoint::combination(n, d, [(1.0, &state.v[i])]);
        state.x[i] = prox_f(state, instance, i, &input, options.alpha, tol, options.inner.max_iter)?;
    }
    // Round A.
    for i in 0..n {
        let payload = Arc::new(state.x[i].clone());
        let bytes = payload.byte_size();
        rt.net.broadcast(i, payload, bytes)?;
    }
    rt.net.barrier();
    for i in 0..n {
        rt.block1_inbox[i].clear();
        for &j in rt.net.adjacency().neighbors(i) {
            let msg = Arc::clone(rt.net.received(i, j)?);
            rt.block1_inbox[i].insert(j, msg);
        }
    }

    // Second block.
    for i in 0..n {
        let row = n + i;
        let mut terms: Vec<(f64, Arc<LiftedPoint>)> = Vec::new();
        for (j, c) in params.l_row(row) {
            let xj = if j == i {
                Arc::new(state.x[i].clone())
            } else {
                Arc::clone(rt.block1_inbox[i].get(&j).ok_or(crate::error::NetworkError::Missing {
                    node: i,
                    from: j,
                    round: rt.net.log().rounds,
                })?)
            };
            terms.push((c, xj));
        }
        let input = LiftedPoint::combination(
            n,
            d,
            std::iter::once((1.0, &state.v[row])).chain(terms.iter().map(|(c, p)| (*c, p.as_ref()))),
        );
        state.x[row] = prox_f(state, instance, row, &input, options.alpha, tol, options.inner.max_iter)?;
    }
    // Round B.
    for i in 0..n {
        let payload = Arc::new(state.x[n + i].clone());
        let bytes = payload.byte_size();
        rt.net.broadcast(i, payload, bytes)?;
    }
    rt.net.barrier();

    // Consensus update, each worker for its two rows.
    let mut wx_sq = 0.0;
    for i in 0..n {
        for row in [i, n + i] {
            let mut terms: Vec<(f64, Arc<LiftedPoint>)> = Vec::new();
            for (j, c) in params.w_row(row) {
                let owner = j % n;
                let p = if owner == i {
                    Arc::new(state.x[j].clone())
                } else if j < n {
                    Arc::clone(rt.block1_inbox[i].get(&j).ok_or(crate::error::NetworkError::Missing {
                        node: i,
                        from: j,
                        round: rt.net.log().rounds,
                    })?)
                } else {
                    Arc::clone(rt.net.received(i, owner)?)
                };
                terms.push((c, p));
            }
            let wx = LiftedPoint::combination(n, d, terms.iter().map(|(c, p)| (*c, p.as_ref())));
            wx_sq += wx.norm_squared();
            state.v[row].axpy(-options.gamma, &wx);
        }
    }
    let x_sq: f64 = state.x.iter().map(LiftedPoint::norm_squared).sum();
    state.fixed_point_residual = relative_fp(options.gamma, wx_sq, x_sq);
    state.iteration += 1;
    Ok(())
}

struct SplittingEngine<'a> {
    state: SolverState,
    params: &'a MatrixParams,
    runtime: Option<DecentralizedRuntime>,
}

impl Engine for SplittingEngine<'_> {
    fn step(&mut self, instance: &ProblemInstance, options: &SolverOptions) -> Result<(), SolverError> {
        match self.runtime.as_mut() {
            Some(rt) => iterate_decentralized(&mut self.state, instance, self.params, options, rt)?,
            None => iterate(&mut self.state, instance, self.params, options)?,
        }
        Ok(())
    }

    fn snapshot(&self, instance: &ProblemInstance, options: &SolverOptions, iteration: usize) -> Snapshot {
        let n = instance.n();
        observe(
            instance,
            &self.state.x[..n],
            &self.state.x[n..],
            options.estimate_source,
            iteration,
        )
    }

    fn fixed_point_residual(&self) -> f64 {
        self.state.fixed_point_residual
    }

    fn dual_sum(&self) -> Option<f64> {
        Some(dual_sum(&self.state, self.params))
    }

    fn network_log(&self) -> Option<NetworkLog> {
        self.runtime.as_ref().map(|rt| rt.log().clone())
    }
}

/// Runs from `initial` in the mode requested by `options`.
pub fn run(
    instance: &ProblemInstance,
    params: &MatrixParams,
    options: &SolverOptions,
    initial: SolverState,
) -> Result<SolverTrace, SolverError> {
    run_with_state(instance, params, options, initial).map(|(t, _)| t)
}

/// Like [`run`], also handing back the final state.
pub fn run_with_state(
    instance: &ProblemInstance,
    params: &MatrixParams,
    options: &SolverOptions,
    initial: SolverState,
) -> Result<(SolverTrace, SolverState), SolverError> {
    check_params(instance, params)?;
    let runtime = match options.mode {
        Mode::Serial => None,
        Mode::Decentralized => {
            require_two_block(params)?;
            Some(DecentralizedRuntime::new(instance))
        }
    };
    let mut engine = SplittingEngine {
        state: initial,
        params,
        runtime,
    };
    let mut trace = drive(&mut engine, instance, options, Method::Splitting)?;
    engine.state.objective_history = trace.records.iter().map(|r| r.objective).collect();
    trace.metadata.insert(
        "persistent_lifted_per_sensor".into(),
        persistent_lifted_per_sensor(&engine.state) as f64,
    );
    Ok((trace, engine.state))
}

/// Message-passing run from a cold start.
pub fn run_decentralized(
    instance: &ProblemInstance,
    params: &MatrixParams,
    options: &SolverOptions,
) -> Result<SolverTrace, SolverError> {
    let initial = init_cold_with(instance, params, &options.inner)?;
    let opts = SolverOptions {
        mode: Mode::Decentralized,
        ..options.clone()
    };
    run(instance, params, &opts, initial)
}
