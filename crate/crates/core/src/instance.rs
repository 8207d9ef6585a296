//! Problem data for noisy sensor network localization, the per-sensor
//! objective terms of the node-based relaxation, and random instance
//! generation.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::InstanceError;
use crate::graph::Adjacency;
use crate::lifted::LiftedPoint;
use crate::rng;

/// A validated localization problem. Indices are 0-based throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct ProblemInstance {
    d: usize,
    n: usize,
    anchors: DMatrix<f64>,
    sensor_neighbors: Vec<Vec<usize>>,
    anchor_neighbors: Vec<Vec<usize>>,
    dist_ss: Vec<Vec<f64>>,
    dist_sa: Vec<Vec<f64>>,
    truth: Option<DMatrix<f64>>,
}

/// On-disk JSON layout. Matrices are row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub anchors: Vec<Vec<f64>>,
    pub sensor_neighbors: Vec<Vec<usize>>,
    pub anchor_neighbors: Vec<Vec<usize>>,
    pub dist_ss: Vec<Vec<f64>>,
    pub dist_sa: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<Vec<f64>>>,
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>, String> {
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(format!("{what} row {r} has length {}, expected {ncols}", row.len()));
        }
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = InstanceError;

    fn try_from(f: InstanceFile) -> Result<Self, Self::Error> {
        if f.anchors.len() != f.m {
            return Err(InstanceError::Invalid(format!(
                "m = {} but {} anchors given",
                f.m,
                f.anchors.len()
            )));
        }
        let anchors = rows_to_matrix(&f.anchors, f.d, "anchor").map_err(InstanceError::Invalid)?;
        let truth = f
            .truth
            .as_ref()
            .map(|t| {
                if t.len() != f.n {
                    return Err(format!("truth has {} rows, expected {}", t.len(), f.n));
                }
                rows_to_matrix(t, f.d, "truth")
            })
            .transpose()
            .map_err(InstanceError::Invalid)?;
        ProblemInstance::new(
            f.d,
            anchors,
            f.sensor_neighbors,
            f.anchor_neighbors,
            f.dist_ss,
            f.dist_sa,
            truth,
        )
        .and_then(|inst| {
            if inst.n != f.n {
                Err(InstanceError::Invalid(format!(
                    "n = {} but neighbor lists describe {} sensors",
                    f.n, inst.n
                )))
            } else {
                Ok(inst)
            }
        })
    }
}

impl From<ProblemInstance> for InstanceFile {
    fn from(p: ProblemInstance) -> Self {
        InstanceFile {
            d: p.d,
            n: p.n,
            m: p.anchors.nrows(),
            anchors: matrix_to_rows(&p.anchors),
            sensor_neighbors: p.sensor_neighbors,
            anchor_neighbors: p.anchor_neighbors,
            dist_ss: p.dist_ss,
            dist_sa: p.dist_sa,
            truth: p.truth.as_ref().map(matrix_to_rows),
        }
    }
}

fn check_index_list(list: &[usize], bound: usize, exclude: Option<usize>, what: &str) -> Result<(), InstanceError> {
    let mut seen = list.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(InstanceError::Invalid(format!("duplicate index in {what}")));
    }
    for &j in list {
        if j >= bound {
            return Err(InstanceError::Invalid(format!("{what} index {j} out of range")));
        }
        if Some(j) == exclude {
            return Err(InstanceError::Invalid(format!("{what} contains its own sensor {j}")));
        }
    }
    Ok(())
}

fn check_distances(dist: &[f64], expected: usize, what: &str) -> Result<(), InstanceError> {
    if dist.len() != expected {
        return Err(InstanceError::Invalid(format!(
            "{what} has {} distances for {expected} neighbors",
            dist.len()
        )));
    }
    if let Some(v) = dist.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(InstanceError::Invalid(format!("{what} has invalid distance {v}")));
    }
    Ok(())
}

impl ProblemInstance {
    /// Validates every structural invariant, including connectivity of the
    /// derived communication graph.
    pub fn new(
        d: usize,
        anchors: DMatrix<f64>,
        sensor_neighbors: Vec<Vec<usize>>,
        anchor_neighbors: Vec<Vec<usize>>,
        dist_ss: Vec<Vec<f64>>,
        dist_sa: Vec<Vec<f64>>,
        truth: Option<DMatrix<f64>>,
    ) -> Result<Self, InstanceError> {
        let n = sensor_neighbors.len();
        if d == 0 {
            return Err(InstanceError::Invalid("d must be at least 1".into()));
        }
        if n == 0 {
            return Err(InstanceError::Invalid("n must be at least 1".into()));
        }
        if anchors.ncols() != d && anchors.nrows() > 0 {
            return Err(InstanceError::Invalid("anchor dimension mismatch".into()));
        }
        let anchors = if anchors.nrows() == 0 {
            DMatrix::zeros(0, d)
        } else {
            anchors
        };
        if anchors.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::Invalid("non-finite anchor coordinate".into()));
        }
        let m = anchors.nrows();
        if anchor_neighbors.len() != n || dist_ss.len() != n || dist_sa.len() != n {
            return Err(InstanceError::Invalid(
                "per-sensor lists must all have length n".into(),
            ));
        }
        for i in 0..n {
            check_index_list(&sensor_neighbors[i], n, Some(i), &format!("N_{i}"))?;
            check_index_list(&anchor_neighbors[i], m, None, &format!("M_{i}"))?;
            check_distances(&dist_ss[i], sensor_neighbors[i].len(), &format!("dist_ss[{i}]"))?;
            check_distances(&dist_sa[i], anchor_neighbors[i].len(), &format!("dist_sa[{i}]"))?;
        }
        if let Some(t) = &truth {
            if t.shape() != (n, d) {
                return Err(InstanceError::Invalid(format!(
                    "truth has shape {:?}, expected {:?}",
                    t.shape(),
                    (n, d)
                )));
            }
        }
        let inst = Self {
            d,
            n,
            anchors,
            sensor_neighbors,
            anchor_neighbors,
            dist_ss,
            dist_sa,
            truth,
        };
        if !build_adjacency(&inst).is_connected() {
            return Err(InstanceError::Disconnected);
        }
        Ok(inst)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.anchors.nrows()
    }

    /// `m × d`, one anchor per row.
    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn sensor_neighbors(&self, i: usize) -> &[usize] {
        &self.sensor_neighbors[i]
    }

    pub fn anchor_neighbors(&self, i: usize) -> &[usize] {
        &self.anchor_neighbors[i]
    }

    /// Noisy distances aligned with `sensor_neighbors(i)`.
    pub fn dist_ss(&self, i: usize) -> &[f64] {
        &self.dist_ss[i]
    }

    /// Noisy distances aligned with `anchor_neighbors(i)`.
    pub fn dist_sa(&self, i: usize) -> &[f64] {
        &self.dist_sa[i]
    }

    pub fn truth(&self) -> Option<&DMatrix<f64>> {
        self.truth.as_ref()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        serde_json::from_str(s).map_err(|e| InstanceError::Invalid(e.to_string()))
    }
}

/// `A_ij = 1` iff `j ∈ N_i` or `i ∈ N_j`.
pub fn build_adjacency(instance: &ProblemInstance) -> Adjacency {
    let mut edges = Vec::new();
    for i in 0..instance.n {
        for &j in &instance.sensor_neighbors[i] {
            edges.push((i, j));
        }
    }
    Adjacency::from_edges(instance.n, &edges).expect("validated neighbor lists")
}

/// Absolute-deviation objective term owned by sensor `i`.
pub fn g_i(instance: &ProblemInstance, i: usize, p: &LiftedPoint) -> f64 {
    let y = &p.y;
    let mut total = 0.0;
    for (&j, &dij) in instance.sensor_neighbors[i].iter().zip(&instance.dist_ss[i]) {
        total += (dij * dij - y[(i, i)] - y[(j, j)] + 2.0 * y[(i, j)]).abs();
    }
    for (&k, &dik) in instance.anchor_neighbors[i].iter().zip(&instance.dist_sa[i]) {
        let a = instance.anchors.row(k);
        let ax: f64 = a.iter().zip(p.x.row(i).iter()).map(|(u, v)| u * v).sum();
        total += (dik * dik - y[(i, i)] - a.norm_squared() + 2.0 * ax).abs();
    }
    total
}

/// Objective of the node-based relaxation, `Σ_i g_i`.
pub fn objective(instance: &ProblemInstance, p: &LiftedPoint) -> f64 {
    (0..instance.n).map(|i| g_i(instance, i, p)).sum()
}

/// Parameters of the random instance generator. Defaults are the 30-sensor,
/// 6-anchor benchmark in the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub radius: f64,
    pub max_degree: usize,
    pub noise_factor: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n: 30,
            m: 6,
            d: 2,
            radius: 0.7,
            max_degree: 7,
            noise_factor: 0.05,
        }
    }
}

pub const MAX_GENERATION_ATTEMPTS: u64 = 1000;

/// Draws a random connected instance.
///
/// Attempt `t` (starting at 0) uses the ChaCha8 stream `t` of `seed`. Within
/// an attempt the draw order is: sensor coordinates (row-major), anchor
/// coordinates, sensor neighborhoods for each sensor in turn followed by its
/// anchor neighborhood, and finally one standard normal per directed
/// observation in the same order. Observations whose noisy distance would be
/// negative are clamped to zero.
pub fn generate_instance(cfg: &GeneratorConfig, seed: u64) -> Result<ProblemInstance, InstanceError> {
    if cfg.n == 0 || cfg.d == 0 {
        return Err(InstanceError::Invalid("n and d must be at least 1".into()));
    }
    if !(cfg.radius > 0.0) || !cfg.radius.is_finite() {
        return Err(InstanceError::Invalid("radius must be positive".into()));
    }
    if !(cfg.noise_factor >= 0.0) || !cfg.noise_factor.is_finite() {
        return Err(InstanceError::Invalid("noise_factor must be nonnegative".into()));
    }
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = rng::stream(seed, attempt);
        match draw(cfg, &mut rng) {
            Ok(inst) => return Ok(inst),
            Err(InstanceError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(InstanceError::RadiusTooSmall {
        attempts: MAX_GENERATION_ATTEMPTS as usize,
        radius: cfg.radius,
    })
}

fn uniform_points<R: Rng>(rng: &mut R, rows: usize, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, d);
    for r in 0..rows {
        for c in 0..d {
            m[(r, c)] = rng.random::<f64>();
        }
    }
    m
}

fn within_radius<R: Rng>(
    rng: &mut R,
    candidates: Vec<(usize, f64)>,
    radius: f64,
    max_degree: usize,
) -> Vec<(usize, f64)> {
    let close: Vec<(usize, f64)> = candidates.into_iter().filter(|&(_, dist)| dist < radius).collect();
    if close.len() <= max_degree {
        return close;
    }
    let mut picked: Vec<usize> = index::sample(rng, close.len(), max_degree).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|p| close[p]).collect()
}

fn draw<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Result<ProblemInstance, InstanceError> {
    let sensors = uniform_points(rng, cfg.n, cfg.d);
    let anchors = uniform_points(rng, cfg.m, cfg.d);
    let dist = |a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>| (a - b).norm();

    let mut sensor_obs = Vec::with_capacity(cfg.n);
    let mut anchor_obs = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let si = sensors.row(i).transpose();
        let cands: Vec<(usize, f64)> = (0..cfg.n)
            .filter(|&j| j != i)
            .map(|j| (j, dist(si.as_view(), sensors.row(j).transpose().as_view())))
            .collect();
        sensor_obs.push(within_radius(rng, cands, cfg.radius, cfg.max_degree));
        let cands: Vec<(usize, f64)> = (0..cfg.m)
            .map(|k| (k, dist(si.as_view(), anchors.row(k).transpose().as_view())))
            .collect();
        anchor_obs.push(within_radius(rng, cands, cfg.radius, cfg.max_degree));
    }

    let mut noisy = |true_dist: f64| -> f64 {
        let eps: f64 = rng.sample(StandardNormal);
        (true_dist * (1.0 + cfg.noise_factor * eps)).max(0.0)
    };
    let mut dist_ss = Vec::with_capacity(cfg.n);
    let mut dist_sa = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        dist_ss.push(sensor_obs[i].iter().map(|&(_, d0)| noisy(d0)).collect::<Vec<_>>());
        dist_sa.push(anchor_obs[i].iter().map(|&(_, d0)| noisy(d0)).collect::<Vec<_>>());
    }

    ProblemInstance::new(
        cfg.d,
        anchors,
        sensor_obs.iter().map(|o| o.iter().map(|&(j, _)| j).collect()).collect(),
        anchor_obs.iter().map(|o| o.iter().map(|&(k, _)| k).collect()).collect(),
        dist_ss,
        dist_sa,
        Some(sensors),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_one_anchor() -> ProblemInstance {
        // One sensor, one anchor at the origin, measured distance 1.
        ProblemInstance::new(
            2,
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            vec![vec![]],
            vec![vec![0]],
            vec![vec![]],
            vec![vec![1.0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn g_hand_evaluation() {
        let inst = toy_one_anchor();
        let mut p = LiftedPoint::zeros(1, 2);
        p.x[(0, 0)] = 1.0;
        p.y[(0, 0)] = 2.0;
        // |1 - 2 - 0 + 0|
        assert_eq!(g_i(&inst, 0, &p), 1.0);
    }

    #[test]
    fn empty_neighborhoods_give_zero() {
        let inst = ProblemInstance::new(
            2,
            DMatrix::zeros(0, 2),
            vec![vec![1], vec![]],
            vec![vec![], vec![]],
            vec![vec![0.3], vec![]],
            vec![vec![], vec![]],
            None,
        )
        .unwrap();
        let mut p = LiftedPoint::zeros(2, 2);
        p.y[(1, 1)] = 5.0;
        p.y[(0, 0)] = 1.0;
        assert_eq!(g_i(&inst, 1, &p), 0.0);
        assert!(g_i(&inst, 0, &p) > 0.0);
    }

    #[test]
    fn adjacency_is_union_of_directed_observations() {
        let inst = ProblemInstance::new(
            2,
            DMatrix::zeros(0, 2),
            vec![vec![1], vec![]],
            vec![vec![], vec![]],
            vec![vec![0.3], vec![]],
            vec![vec![], vec![]],
            None,
        )
        .unwrap();
        let a = build_adjacency(&inst).to_dense();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn disconnected_instance_rejected() {
        let err = ProblemInstance::new(
            1,
            DMatrix::zeros(0, 1),
            vec![vec![], vec![]],
            vec![vec![], vec![]],
            vec![vec![], vec![]],
            vec![vec![], vec![]],
            None,
        )
        .unwrap_err();
        assert_eq!(err, InstanceError::Disconnected);
    }

    #[test]
    fn loader_rejects_bad_indices_and_distances() {
        let good = toy_one_anchor();
        let mut f: InstanceFile = good.into();
        f.anchor_neighbors[0] = vec![3];
        assert!(ProblemInstance::try_from(f.clone()).is_err());
        f.anchor_neighbors[0] = vec![0];
        f.dist_sa[0] = vec![-1.0];
        assert!(ProblemInstance::try_from(f.clone()).is_err());
        f.dist_sa[0] = vec![1.0];
        f.m = 2;
        assert!(ProblemInstance::try_from(f).is_err());
    }

    #[test]
    fn benchmark_degrees_are_capped() {
        let inst = generate_instance(&GeneratorConfig::default(), 11).unwrap();
        for i in 0..inst.n() {
            assert!(inst.sensor_neighbors(i).len() <= 7);
            assert!(inst.anchor_neighbors(i).len() <= 7);
        }
        assert!(build_adjacency(&inst).is_connected());
    }

    #[test]
    fn tiny_radius_is_rejected() {
        let cfg = GeneratorConfig {
            n: 20,
            radius: 1e-6,
            ..GeneratorConfig::default()
        };
        assert!(matches!(
            generate_instance(&cfg, 0),
            Err(InstanceError::RadiusTooSmall { .. })
        ));
    }
}
