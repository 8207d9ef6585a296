//! Accuracy measures for location estimates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;

fn check_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::Shape {
            expected: b.shape(),
            got: a.shape(),
        });
    }
    Ok(())
}

/// `‖X̂ − X₀‖_F / ‖X₀‖_F`
pub fn relative_error(x_hat: &DMatrix<f64>, x0: &DMatrix<f64>) -> Result<f64, MetricError> {
    check_shape(x_hat, x0)?;
    let denom = x0.norm();
    if denom == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    Ok((x_hat - x0).norm() / denom)
}

/// Mean distance of the estimates from the anchors' center of mass.
pub fn centrality(x_hat: &DMatrix<f64>, anchors: &DMatrix<f64>) -> Result<f64, MetricError> {
    if anchors.nrows() == 0 {
        return Err(MetricError::NoAnchors);
    }
    if anchors.ncols() != x_hat.ncols() {
        return Err(MetricError::Shape {
            expected: (anchors.nrows(), x_hat.ncols()),
            got: anchors.shape(),
        });
    }
    let center = anchors.row_mean();
    let n = x_hat.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n).map(|i| (x_hat.row(i) - &center).norm()).sum();
    Ok(total / n as f64)
}

/// `(1/n) Σ_i ‖X̂_i − X₀_i‖₂`
pub fn mean_distance(x_hat: &DMatrix<f64>, x0: &DMatrix<f64>) -> Result<f64, MetricError> {
    check_shape(x_hat, x0)?;
    let n = x0.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n).map(|i| (x_hat.row(i) - x0.row(i)).norm()).sum();
    Ok(total / n as f64)
}

/// One row of a solver trace.
///
/// Truth-dependent columns are `None` when the instance carries no ground
/// truth; `centrality` is `None` without anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub objective: f64,
    pub rel_error: Option<f64>,
    pub centrality: Option<f64>,
    pub mean_distance: Option<f64>,
    pub psd_residual: f64,
    pub consensus_residual: f64,
}

impl MetricRecord {
    pub fn is_finite(&self) -> bool {
        let opt = |v: Option<f64>| v.map_or(true, f64::is_finite);
        self.objective.is_finite()
            && self.psd_residual.is_finite()
            && self.consensus_residual.is_finite()
            && opt(self.rel_error)
            && opt(self.centrality)
            && opt(self.mean_distance)
    }
}
