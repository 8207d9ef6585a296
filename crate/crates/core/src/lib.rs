//! Decentralized sensor network localization over a node-based semidefinite
//! relaxation, solved by matrix-parametrized proximal splitting or by
//! graph-consensus ADMM.

pub mod admm;
pub mod design;
pub mod early_stop;
pub mod error;
pub mod graph;
pub mod instance;
pub mod lifted;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod prox;
pub mod rng;
pub mod solver;
pub mod splitting;

pub use error::{DesignError, InstanceError, MetricError, NetworkError, ProxError, SolverError};
pub use graph::Adjacency;
pub use instance::{GeneratorConfig, ProblemInstance};
pub use lifted::LiftedPoint;
pub use solver::{EstimateSource, Method, Mode, SolverOptions, SolverTrace};
