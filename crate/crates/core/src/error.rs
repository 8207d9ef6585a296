use thiserror::Error;

use crate::lifted::LiftedPoint;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("communication graph is disconnected")]
    Disconnected,
    #[error("{attempts} consecutive draws produced a disconnected graph; radius {radius} is likely too small")]
    RadiusTooSmall { attempts: usize, radius: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference locations have zero Frobenius norm")]
    ZeroReference,
    #[error("centrality needs at least one anchor")]
    NoAnchors,
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("matrix has no support: {0}")]
    NoSupport(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("decentralized balancing did not converge in {rounds} rounds (deviation {deviation:e})")]
    NotConverged { rounds: usize, deviation: f64 },
}

#[derive(Debug, Error)]
pub enum ProxError {
    #[error("inner ADMM hit its budget of {iterations} iterations (last update norm {residual:e})")]
    MaxInnerIterations {
        best: Box<LiftedPoint>,
        iterations: usize,
        residual: f64,
    },
    #[error("eigendecomposition failed: {0}")]
    Numeric(String),
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("node {from} attempted to send to non-neighbor {to}")]
    NonEdge { from: usize, to: usize },
    #[error("node {node} expected a message from {from} in round {round} but none arrived")]
    Missing {
        node: usize,
        from: usize,
        round: u64,
    },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matrix parameters do not match the instance: {0}")]
    Params(String),
}
