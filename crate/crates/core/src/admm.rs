//! Graph-consensus ADMM over the same `2n` functions, used as a baseline.
//!
//! Node `i` of the lifted graph `G(A′)` averages over its neighbor set
//! `𝒦_i`. Sensor `i` runs nodes `i` and `n + i`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{SolverError, ProxError};
use crate::graph::Adjacency;
use crate::instance::{build_adjacency, ProblemInstance};
use crate::lifted::LiftedPoint;
use crate::network::{NetworkLog, SimNetwork};
use crate::prox::{build_g_prox_data, delta_prox, g_prox_lenient, GProxData, InnerSchedule};
use crate::solver::{drive, observe, Engine, Method, Mode, Snapshot, SolverOptions, SolverTrace};

/// `A′ = [[A, A + I], [A + I, A]]` as a `2n`-node graph.
pub fn build_gprime(adj: &Adjacency) -> Adjacency {
    let n = adj.n();
    let mut edges = Vec::new();
    for (i, j) in adj.edges() {
        edges.push((i, j));
        edges.push((n + i, n + j));
        edges.push((i, n + j));
        edges.push((j, n + i));
    }
    for i in 0..n {
        edges.push((i, n + i));
    }
    Adjacency::from_edges(2 * n, &edges).expect("lifted edges are in range and loop-free")
}

/// `𝒦_i` for every lifted node, ascending.
pub fn k_sets(adj: &Adjacency) -> Vec<Vec<usize>> {
    let gp = build_gprime(adj);
    (0..gp.n()).map(|i| gp.neighbors(i).to_vec()).collect()
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub u: Vec<LiftedPoint>,
    pub r: Vec<LiftedPoint>,
    pub v: Vec<LiftedPoint>,
    pub k_sets: Vec<Vec<usize>>,
    pub iteration: usize,
    pub gprox: Vec<GProxData>,
    fixed_point_residual: f64,
}

impl AdmmState {
    pub fn n(&self) -> usize {
        self.gprox.len()
    }

    pub fn fixed_point_residual(&self) -> f64 {
        self.fixed_point_residual
    }

    pub fn mean_k_size(&self) -> f64 {
        self.k_sets.iter().map(Vec::len).sum::<usize>() as f64 / self.k_sets.len() as f64
    }
}

fn state_with(instance: &ProblemInstance, start: LiftedPoint, inner: &InnerSchedule) -> AdmmState {
    let n = instance.n();
    let all = vec![start; 2 * n];
    AdmmState {
        u: all.clone(),
        r: all.clone(),
        v: all,
        k_sets: k_sets(&build_adjacency(instance)),
        iteration: 0,
        gprox: (0..n).map(|i| build_g_prox_data(instance, i, inner.rho)).collect(),
        fixed_point_residual: f64::INFINITY,
    }
}

pub fn init_cold_admm(instance: &ProblemInstance, inner: &InnerSchedule) -> AdmmState {
    state_with(instance, LiftedPoint::zeros(instance.n(), instance.d()), inner)
}

/// Every `V_i`, `R_i` and `U_i` set to `(X̃, X̃X̃ᵀ)`.
pub fn warm_start_admm(instance: &ProblemInstance, x_tilde: &DMatrix<f64>) -> Result<AdmmState, SolverError> {
    warm_start_admm_with(instance, x_tilde, &InnerSchedule::default())
}

pub fn warm_start_admm_with(
    instance: &ProblemInstance,
    x_tilde: &DMatrix<f64>,
    inner: &InnerSchedule,
) -> Result<AdmmState, SolverError> {
    let shape = (instance.n(), instance.d());
    if x_tilde.shape() != shape {
        return Err(SolverError::Shape {
            expected: shape,
            got: x_tilde.shape(),
        });
    }
    Ok(state_with(instance, LiftedPoint::from_locations(x_tilde), inner))
}

/// `V`, `R` and `U` for both hosted nodes.
pub fn admm_persistent_lifted_per_sensor(state: &AdmmState) -> usize {
    (state.u.len() + state.r.len() + state.v.len()) / state.n()
}

fn prox_node(
    state: &mut AdmmState,
    instance: &ProblemInstance,
    node: usize,
    alpha: f64,
    tol: f64,
    max_inner: usize,
) -> Result<LiftedPoint, ProxError> {
    let n = instance.n();
    let scaled = alpha / state.k_sets[node].len() as f64;
    let input = state.v[node].clone();
    if node < n {
        g_prox_lenient(&mut state.gprox[node], &input, scaled, tol, max_inner)
    } else {
        delta_prox(instance, node - n, &input)
    }
}

fn finish_step(state: &mut AdmmState, u_new: Vec<LiftedPoint>, r_new: Vec<LiftedPoint>) {
    let n = state.n();
    let d = state.u[0].d();
    let mut dv_sq = 0.0;
    let mut v_sq = 0.0;
    for node in 0..state.v.len() {
        let v_new = LiftedPoint::combination(
            n,
            d,
            [
                (1.0, &state.v[node]),
                (1.0, &r_new[node]),
                (-0.5, &state.r[node]),
                (-0.5, &state.u[node]),
            ],
        );
        dv_sq += v_new.sub(&state.v[node]).norm_squared();
        v_sq += v_new.norm_squared();
        state.v[node] = v_new;
    }
    state.u = u_new;
    state.r = r_new;
    state.fixed_point_residual = dv_sq.sqrt() / v_sq.sqrt().max(1.0);
    state.iteration += 1;
}

/// One synchronous iteration with global visibility.
pub fn iterate_admm(
    state: &mut AdmmState,
    instance: &ProblemInstance,
    options: &SolverOptions,
) -> Result<(), SolverError> {
    let n = instance.n();
    let d = instance.d();
    let tol = options.inner.tol(state.iteration);
    let mut u_new = Vec::with_capacity(2 * n);
    for node in 0..2 * n {
        u_new.push(prox_node(state, instance, node, options.alpha, tol, options.inner.max_iter)?);
    }
    let r_new: Vec<LiftedPoint> = state
        .k_sets
        .iter()
        .map(|k| {
            let w = 1.0 / k.len() as f64;
            LiftedPoint::combination(n, d, k.iter().map(|&j| (w, &u_new[j])))
        })
        .collect();
    finish_step(state, u_new, r_new);
    Ok(())
}

/// `(U_i, U_{n+i})` as sent by sensor `i`.
pub type UPair = (LiftedPoint, LiftedPoint);

pub struct AdmmRuntime {
    net: SimNetwork<UPair>,
}

impl AdmmRuntime {
    pub fn new(instance: &ProblemInstance) -> Self {
        Self {
            net: SimNetwork::new(build_adjacency(instance)),
        }
    }

    pub fn log(&self) -> &NetworkLog {
        self.net.log()
    }
}

/// One iteration as `n` workers exchanging their `U` pairs in a single round.
pub fn iterate_admm_decentralized(
    state: &mut AdmmState,
    instance: &ProblemInstance,
    options: &SolverOptions,
    rt: &mut AdmmRuntime,
) -> Result<(), SolverError> {
    let n = instance.n();
    let d = instance.d();
    let tol = options.inner.tol(state.iteration);
    let mut u_new = Vec::with_capacity(2 * n);
    for node in 0..2 * n {
        u_new.push(prox_node(state, instance, node, options.alpha, tol, options.inner.max_iter)?);
    }
    for i in 0..n {
        let payload = Arc::new((u_new[i].clone(), u_new[n + i].clone()));
        let bytes = payload.0.byte_size() + payload.1.byte_size();
        rt.net.broadcast(i, payload, bytes)?;
    }
    rt.net.barrier();

    let mut r_new = Vec::with_capacity(2 * n);
    for node in 0..2 * n {
        let owner = node % n;
        let k = &state.k_sets[node];
        let w = 1.0 / k.len() as f64;
        let mut terms: Vec<(f64, &LiftedPoint)> = Vec::with_capacity(k.len());
        for &j in k {
            let sender = j % n;
            if sender == owner {
                terms.push((w, &u_new[j]));
            } else {
                let pair = rt.net.received(owner, sender)?;
                terms.push((w, if j < n { &pair.0 } else { &pair.1 }));
            }
        }
        r_new.push(LiftedPoint::combination(n, d, terms));
    }
    finish_step(state, u_new, r_new);
    Ok(())
}

struct AdmmEngine {
    state: AdmmState,
    runtime: Option<AdmmRuntime>,
}

impl Engine for AdmmEngine {
    fn step(&mut self, instance: &ProblemInstance, options: &SolverOptions) -> Result<(), SolverError> {
        match self.runtime.as_mut() {
            Some(rt) => iterate_admm_decentralized(&mut self.state, instance, options, rt),
            None => iterate_admm(&mut self.state, instance, options),
        }
    }

    fn snapshot(&self, instance: &ProblemInstance, options: &SolverOptions, iteration: usize) -> Snapshot {
        let n = instance.n();
        observe(
            instance,
            &self.state.u[..n],
            &self.state.u[n..],
            options.estimate_source,
            iteration,
        )
    }

    fn fixed_point_residual(&self) -> f64 {
        self.state.fixed_point_residual
    }

    fn dual_sum(&self) -> Option<f64> {
        None
    }

    fn network_log(&self) -> Option<NetworkLog> {
        self.runtime.as_ref().map(|rt| rt.log().clone())
    }
}

pub fn run_admm_from(
    instance: &ProblemInstance,
    options: &SolverOptions,
    initial: AdmmState,
) -> Result<SolverTrace, SolverError> {
    run_admm_with_state(instance, options, initial).map(|(t, _)| t)
}

pub fn run_admm_with_state(
    instance: &ProblemInstance,
    options: &SolverOptions,
    initial: AdmmState,
) -> Result<(SolverTrace, AdmmState), SolverError> {
    if initial.n() != instance.n() {
        return Err(SolverError::Shape {
            expected: (instance.n(), instance.d()),
            got: (initial.n(), initial.u[0].d()),
        });
    }
    let runtime = match options.mode {
        Mode::Serial => None,
        Mode::Decentralized => Some(AdmmRuntime::new(instance)),
    };
    let mut engine = AdmmEngine {
        state: initial,
        runtime,
    };
    let mut trace = drive(&mut engine, instance, options, Method::Admm)?;
    let mean_k = engine.state.mean_k_size();
    trace.metadata.insert("mean_k_size".into(), mean_k);
    trace.metadata.insert("equivalent_splitting_alpha".into(), options.alpha / mean_k);
    trace.metadata.insert(
        "persistent_lifted_per_sensor".into(),
        admm_persistent_lifted_per_sensor(&engine.state) as f64,
    );
    Ok((trace, engine.state))
}

/// Cold-start run in the mode requested by `options`.
pub fn run_admm(instance: &ProblemInstance, options: &SolverOptions) -> Result<SolverTrace, SolverError> {
    run_admm_from(instance, options, init_cold_admm(instance, &options.inner))
}
