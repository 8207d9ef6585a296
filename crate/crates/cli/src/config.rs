use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snl_core::prox::InnerSchedule;
use snl_core::solver::{EarlyStopOptions, EstimateSource, Method, SolverOptions};
use snl_core::GeneratorConfig;

use crate::ExperimentError;

/// Environment variable that replaces every configured output directory.
pub const OUTPUT_DIR_ENV: &str = "SNL_OUTPUT_DIR";

/// Overrides applied on top of a method's default options.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSettings {
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub max_iter: Option<usize>,
    pub fixed_point_tol: Option<f64>,
    pub inner: Option<InnerSchedule>,
    pub estimate_source: Option<EstimateSource>,
}

impl MethodSettings {
    pub fn apply(&self, method: Method) -> SolverOptions {
        let mut o = SolverOptions::for_method(method);
        if let Some(g) = self.gamma {
            o.gamma = g;
        }
        if let Some(a) = self.alpha {
            o.alpha = a;
        }
        if let Some(m) = self.max_iter {
            o.max_iter = m;
        }
        if let Some(t) = self.fixed_point_tol {
            o.fixed_point_tol = Some(t);
        }
        if let Some(inner) = &self.inner {
            o.inner = inner.clone();
        }
        if let Some(src) = self.estimate_source {
            o.estimate_source = src;
        }
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartSpec {
    /// Standard deviation of the Gaussian perturbation of the true locations.
    pub sd: f64,
}

/// Batch experiment description. Every field has a default, so a config
/// file only needs the values it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    /// Trial `t` uses seed `base_seed + t`.
    pub base_seed: u64,
    pub instance: GeneratorConfig,
    pub methods: Vec<Method>,
    pub splitting: MethodSettings,
    pub admm: MethodSettings,
    /// Iterations per run in the comparison and centrality experiments.
    pub iterations: usize,
    pub warm_start: Option<WarmStartSpec>,
    pub early_stop: EarlyStopOptions,
    /// Trailing iterations of the cold splitting run whose median relative
    /// error defines a trial's plateau.
    pub plateau_window: usize,
    /// A run has reached the plateau once its relative error is at most
    /// `reach_band` times the plateau.
    pub reach_band: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            base_seed: 0,
            instance: GeneratorConfig::default(),
            methods: vec![Method::Splitting, Method::Admm],
            splitting: MethodSettings::default(),
            admm: MethodSettings::default(),
            iterations: 200,
            warm_start: None,
            early_stop: EarlyStopOptions {
                patience: 100,
                halt: false,
            },
            plateau_window: 100,
            reach_band: 1.25,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(ExperimentError::Config("at least one method is required".into()));
        }
        if self.iterations == 0 {
            return Err(ExperimentError::Config("iterations must be at least 1".into()));
        }
        if let Some(w) = &self.warm_start {
            if !(w.sd >= 0.0 && w.sd.is_finite()) {
                return Err(ExperimentError::Config(format!("invalid warm-start sd {}", w.sd)));
            }
        }
        if !(self.reach_band >= 1.0) {
            return Err(ExperimentError::Config("reach_band must be at least 1".into()));
        }
        for &m in &self.methods {
            self.options(m)
                .validate(m)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.base_seed + trial as u64
    }

    pub fn options(&self, method: Method) -> SolverOptions {
        match method {
            Method::Splitting => self.splitting.apply(method),
            Method::Admm => self.admm.apply(method),
        }
    }

    /// The configured directory, replaced by `SNL_OUTPUT_DIR` when set.
    pub fn resolved_output_dir(&self) -> Option<PathBuf> {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Some(PathBuf::from(dir)),
            _ => self.output_dir.clone(),
        }
    }
}
