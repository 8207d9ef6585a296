//! Batch experiments, summaries and plots on top of `snl-core`.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod stats;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trial failed: {0}")]
    Trial(String),
    #[error("all {0} trials failed")]
    NoTrials(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Short machine-readable kind used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Trial(_) => "trial",
            ExperimentError::NoTrials(_) => "no_trials",
            ExperimentError::Io(_) => "io",
        }
    }
}
