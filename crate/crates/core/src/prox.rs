//! Proximal operators of the two function families: the absolute-deviation
//! terms `g_i` and the indicators of `S^i(X, Y) ⪰ 0`.

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::ProxError;
use crate::instance::ProblemInstance;
use crate::lifted::LiftedPoint;
use crate::linalg::min_eigenvalue;

/// Componentwise `sign(x) · max(|x| − τ, 0)`.
pub fn soft_threshold(x: &DVector<f64>, tau: f64) -> DVector<f64> {
    x.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Inner-solver settings. The tolerance tightens geometrically with the
/// outer iteration `k`: `max(tol_min, tol0 · beta^⌊k / every⌋)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSchedule {
    pub tol0: f64,
    pub beta: f64,
    pub every: usize,
    pub tol_min: f64,
    pub max_iter: usize,
    pub rho: f64,
}

impl Default for InnerSchedule {
    fn default() -> Self {
        Self {
            tol0: 1e-4,
            beta: 0.5,
            every: 50,
            tol_min: 1e-8,
            max_iter: 10_000,
            rho: 1.0,
        }
    }
}

impl InnerSchedule {
    pub fn tol(&self, outer_iteration: usize) -> f64 {
        let steps = (outer_iteration / self.every.max(1)) as i32;
        (self.tol0 * self.beta.powi(steps)).max(self.tol_min)
    }
}

/// Location of one vectorized coordinate inside `(X, Y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coord {
    /// `Y[r, c]` and its mirror `Y[c, r]`.
    Y(usize, usize),
    X(usize, usize),
}

/// Per-sensor cache for the `g_i` prox: the least-absolute-deviation
/// reformulation, a Cholesky factor of `ρKᵀK + DᵀD`, and the inner ADMM
/// warm start.
///
/// Coordinates are ordered `(Y_ii, Y_{j1 j1}, Y_{i j1}, …, Y_{jk jk}, Y_{i jk}, X_i·)`.
#[derive(Clone, Debug)]
pub struct GProxData {
    sensor: usize,
    index_map: Vec<Coord>,
    k: DMatrix<f64>,
    d_diag: DVector<f64>,
    c: DVector<f64>,
    n_obs: usize,
    rho: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    /// `(ρKᵀK + DᵀD)⁻¹ ρKᵀ`
    solve_op: DMatrix<f64>,
    /// `K · solve_op`
    proj_op: DMatrix<f64>,
    /// `KKᵀ`
    gram: DMatrix<f64>,
    lambda: DVector<f64>,
    y: DVector<f64>,
    factorizations: usize,
    last_iterations: usize,
}

/// Assembles the vectorized problem for sensor `i` and factors it once.
///
/// Rows of `K` are `[1, e_t ⊗ (1, −2), 0]` for each sensor observation and
/// `[1, 0, −2 a_kᵀ]` for each anchor observation, so that `c − K·vec(X, Y)`
/// reproduces the residuals inside `g_i`.
pub fn build_g_prox_data(instance: &ProblemInstance, i: usize, rho: f64) -> GProxData {
    assert!(rho > 0.0, "rho must be positive");
    let d = instance.d();
    let nbrs = instance.sensor_neighbors(i);
    let anchors = instance.anchor_neighbors(i);
    let nn = nbrs.len();
    let dim = 1 + 2 * nn + d;
    let rows = nn + anchors.len();

    let mut index_map = Vec::with_capacity(dim);
    index_map.push(Coord::Y(i, i));
    for &j in nbrs {
        index_map.push(Coord::Y(j, j));
        index_map.push(Coord::Y(i, j));
    }
    for a in 0..d {
        index_map.push(Coord::X(i, a));
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut d_diag = DVector::from_element(dim, 1.0);
    for t in 0..nn {
        d_diag[2 + 2 * t] = sqrt2;
    }
    for a in 0..d {
        d_diag[1 + 2 * nn + a] = sqrt2;
    }

    let mut k = DMatrix::zeros(rows, dim);
    let mut c = DVector::zeros(rows);
    for (t, &dij) in instance.dist_ss(i).iter().enumerate() {
        k[(t, 0)] = 1.0;
        k[(t, 1 + 2 * t)] = 1.0;
        k[(t, 2 + 2 * t)] = -2.0;
        c[t] = dij * dij;
    }
    for (s, (&kk, &dik)) in anchors.iter().zip(instance.dist_sa(i)).enumerate() {
        let r = nn + s;
        let a = instance.anchors().row(kk);
        k[(r, 0)] = 1.0;
        for col in 0..d {
            k[(r, 1 + 2 * nn + col)] = -2.0 * a[col];
        }
        c[r] = dik * dik - a.norm_squared();
    }

    let mut data = GProxData {
        sensor: i,
        index_map,
        k,
        d_diag,
        c,
        n_obs: rows,
        rho,
        chol: None,
        solve_op: DMatrix::zeros(dim, rows),
        proj_op: DMatrix::zeros(rows, rows),
        gram: DMatrix::zeros(rows, rows),
        lambda: DVector::zeros(rows),
        y: DVector::zeros(rows),
        factorizations: 0,
        last_iterations: 0,
    };
    data.factor();
    data
}

impl GProxData {
    fn factor(&mut self) {
        if self.n_obs == 0 {
            return;
        }
        let dd = DMatrix::from_diagonal(&self.d_diag.map(|v| v * v));
        let m = self.k.transpose() * &self.k * self.rho + dd;
        let chol = Cholesky::new(m).expect("ρKᵀK + DᵀD is positive definite");
        self.solve_op = chol.solve(&(self.k.transpose() * self.rho));
        self.proj_op = &self.k * &self.solve_op;
        self.gram = &self.k * self.k.transpose();
        self.chol = Some(chol);
        self.factorizations += 1;
    }

    pub fn sensor(&self) -> usize {
        self.sensor
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn d_diag(&self) -> &DVector<f64> {
        &self.d_diag
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn index_map(&self) -> &[Coord] {
        &self.index_map
    }

    /// The `1 / −2` pattern columns of `K` restricted to sensor rows.
    pub fn n_block(&self) -> DMatrix<f64> {
        let nn = (self.index_map.len() - 1 - self.dim_x()) / 2;
        self.k.view((0, 1), (nn, 2 * nn)).clone_owned()
    }

    /// The anchor rows of `K` restricted to the `X_i·` columns.
    pub fn m_block(&self) -> DMatrix<f64> {
        let dx = self.dim_x();
        let nn = (self.index_map.len() - 1 - dx) / 2;
        self.k
            .view((nn, 1 + 2 * nn), (self.n_obs - nn, dx))
            .clone_owned()
    }

    fn dim_x(&self) -> usize {
        self.index_map.iter().filter(|c| matches!(c, Coord::X(..))).count()
    }

    /// Reconstruction `ρKᵀK + DᵀD` from the cached factor.
    pub fn factored_matrix(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| {
            let l = c.l();
            &l * l.transpose()
        })
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn last_inner_iterations(&self) -> usize {
        self.last_iterations
    }

    /// Subgradient estimate `ρλ/α` of `‖·‖₁` at the last inner solution.
    pub fn dual_estimate(&self, alpha: f64) -> DVector<f64> {
        &self.lambda * (self.rho / alpha)
    }

    pub fn reset_warm_start(&mut self) {
        self.lambda.fill(0.0);
        self.y.fill(0.0);
    }

    pub fn vectorize(&self, p: &LiftedPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.index_map.len(),
            self.index_map.iter().map(|c| match *c {
                Coord::Y(r, s) => p.y[(r, s)],
                Coord::X(r, s) => p.x[(r, s)],
            }),
        )
    }

    fn write_back(&self, p: &mut LiftedPoint, v: &DVector<f64>) {
        for (c, &val) in self.index_map.iter().zip(v.iter()) {
            match *c {
                Coord::Y(r, s) => {
                    p.y[(r, s)] = val;
                    p.y[(s, r)] = val;
                }
                Coord::X(r, s) => p.x[(r, s)] = val,
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GProxOutput {
    pub point: LiftedPoint,
    pub iterations: usize,
}

/// `argmin α·g_i(X, Y) + ½‖Y − Yᵏ‖² + ‖X − Xᵏ‖²` by warm-started ADMM on
/// `min α‖y‖₁ + ½‖Dw‖²  s.t.  y = cᵏ − Kw`.
///
/// Stops once both the multiplier update and the change in `ρKᵀy` are at
/// most `tol` in Euclidean norm. Entries outside the vectorized support are
/// copied from `pk`.
pub fn g_prox(
    data: &mut GProxData,
    pk: &LiftedPoint,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GProxOutput, ProxError> {
    assert!(alpha > 0.0 && tol > 0.0);
    if data.n_obs == 0 {
        data.last_iterations = 0;
        return Ok(GProxOutput {
            point: pk.clone(),
            iterations: 0,
        });
    }
    let vk = data.vectorize(pk);
    let ck = &data.c - &data.k * &vk;
    let thresh = alpha / data.rho;
    let rows = ck.len();

    // w = (ρKᵀK + DᵀD)⁻¹ρKᵀ t and Kw = K·w with t = λ + cᵏ − y; only Kw is
    // needed inside the loop.
    let mut t = DVector::zeros(rows);
    let mut kw = DVector::zeros(rows);
    let mut y_new = DVector::zeros(rows);
    let mut dy = DVector::zeros(rows);
    let mut gdy = DVector::zeros(rows);
    let mut update_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        for q in 0..rows {
            t[q] = data.lambda[q] + ck[q] - data.y[q];
        }
        kw.gemv(1.0, &data.proj_op, &t, 0.0);
        let mut r_sq = 0.0;
        for q in 0..rows {
            let base = ck[q] - kw[q];
            let u = base + data.lambda[q];
            let yq = u.signum() * (u.abs() - thresh).max(0.0);
            let r = base - yq;
            data.lambda[q] += r;
            r_sq += r * r;
            y_new[q] = yq;
            dy[q] = yq - data.y[q];
        }
        std::mem::swap(&mut data.y, &mut y_new);
        update_norm = r_sq.sqrt();
        if update_norm <= tol {
            gdy.gemv(1.0, &data.gram, &dy, 0.0);
            let dual_change = dy.dot(&gdy).max(0.0).sqrt() * data.rho;
            if dual_change <= tol {
                converged = true;
                break;
            }
        }
    }
    let w = &data.solve_op * &t;
    data.last_iterations = iterations;

    let mut out = pk.clone();
    data.write_back(&mut out, &(vk + w));
    if converged {
        Ok(GProxOutput {
            point: out,
            iterations,
        })
    } else {
        Err(ProxError::MaxInnerIterations {
            best: Box::new(out),
            iterations,
            residual: update_norm,
        })
    }
}

/// Like [`g_prox`], but exhausting the inner budget logs a warning and
/// returns the last iterate.
pub fn g_prox_lenient(
    data: &mut GProxData,
    pk: &LiftedPoint,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LiftedPoint, ProxError> {
    match g_prox(data, pk, alpha, tol, max_iter) {
        Ok(out) => Ok(out.point),
        Err(ProxError::MaxInnerIterations {
            best,
            iterations,
            residual,
        }) => {
            warn!(
                "g-prox for sensor {} stopped at the {iterations}-iteration budget (update norm {residual:e})",
                data.sensor
            );
            Ok(*best)
        }
        Err(e) => Err(e),
    }
}

/// Euclidean projection onto the PSD cone, `V₊Λ₊V₊ᵀ`.
pub fn psd_project(s: &DMatrix<f64>) -> Result<DMatrix<f64>, ProxError> {
    if !s.is_square() {
        return Err(ProxError::Numeric("matrix must be square".into()));
    }
    if s.is_empty() {
        return Ok(s.clone());
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| ProxError::Numeric("symmetric eigensolver did not converge".into()))?;
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let p = v * DMatrix::from_diagonal(&vals) * v.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

/// Sensor indices spanned by `S^i`: `i` followed by `N_i`.
fn block_sensors(instance: &ProblemInstance, i: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(1 + instance.sensor_neighbors(i).len());
    idx.push(i);
    idx.extend_from_slice(instance.sensor_neighbors(i));
    idx
}

/// The principal submatrix `S^i(X, Y)` with the `d × d` identity in the top
/// left, then rows for sensor `i` and its neighbors.
pub fn principal_submatrix(instance: &ProblemInstance, i: usize, p: &LiftedPoint) -> DMatrix<f64> {
    let d = instance.d();
    let idx = block_sensors(instance, i);
    let q = d + idx.len();
    let mut s = DMatrix::zeros(q, q);
    for a in 0..d {
        s[(a, a)] = 1.0;
    }
    for (t, &r) in idx.iter().enumerate() {
        for a in 0..d {
            s[(a, d + t)] = p.x[(r, a)];
            s[(d + t, a)] = p.x[(r, a)];
        }
        for (u, &c) in idx.iter().enumerate() {
            s[(d + t, d + u)] = p.y[(r, c)];
        }
    }
    s
}

/// Smallest eigenvalue of `S^i(X, Y)`.
pub fn submatrix_min_eigenvalue(instance: &ProblemInstance, i: usize, p: &LiftedPoint) -> f64 {
    min_eigenvalue(&principal_submatrix(instance, i, p))
}

/// Prox of the indicator of `S^i ⪰ 0`: project the whole `S^i` (identity
/// block included) onto the PSD cone and keep the `X`/`Y` entries. The
/// identity block is re-imposed afterwards, which can leave a small negative
/// eigenvalue; it is logged at debug level.
pub fn delta_prox(instance: &ProblemInstance, i: usize, pk: &LiftedPoint) -> Result<LiftedPoint, ProxError> {
    let d = instance.d();
    let idx = block_sensors(instance, i);
    let projected = psd_project(&principal_submatrix(instance, i, pk))?;
    let mut out = pk.clone();
    for (t, &r) in idx.iter().enumerate() {
        for a in 0..d {
            out.x[(r, a)] = projected[(a, d + t)];
        }
        for (u, &c) in idx.iter().enumerate() {
            out.y[(r, c)] = projected[(d + t, d + u)];
        }
    }
    if log::log_enabled!(log::Level::Debug) {
        let eps = submatrix_min_eigenvalue(instance, i, &out);
        debug!("delta-prox sensor {i}: reassembled min eigenvalue {eps:e}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn pair_instance() -> ProblemInstance {
        ProblemInstance::new(
            2,
            DMatrix::zeros(0, 2),
            vec![vec![1], vec![]],
            vec![vec![], vec![]],
            vec![vec![0.5], vec![]],
            vec![vec![], vec![]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        let x = dvector![3.0, -0.5, -4.0];
        assert_eq!(soft_threshold(&x, 1.0), dvector![2.0, 0.0, -3.0]);
        assert_eq!(soft_threshold(&x, 0.0), x);
    }

    #[test]
    fn single_neighbor_k_row() {
        let data = build_g_prox_data(&pair_instance(), 0, 1.0);
        assert_eq!(data.k().clone(), DMatrix::from_row_slice(1, 5, &[1.0, 1.0, -2.0, 0.0, 0.0]));
        let s2 = std::f64::consts::SQRT_2;
        assert_eq!(data.d_diag().clone(), dvector![1.0, 1.0, s2, s2, s2]);
        assert_eq!(data.n_block(), DMatrix::from_row_slice(1, 2, &[1.0, -2.0]));
        assert_eq!(data.c()[0], 0.25);
        assert_eq!(data.factorizations(), 1);
    }

    #[test]
    fn empty_neighborhood_is_identity() {
        let inst = pair_instance();
        let mut data = build_g_prox_data(&inst, 1, 1.0);
        assert_eq!(data.k().nrows(), 0);
        let mut p = LiftedPoint::zeros(2, 2);
        p.x[(1, 0)] = 0.3;
        p.y[(0, 1)] = 0.7;
        p.y[(1, 0)] = 0.7;
        let out = g_prox(&mut data, &p, 5.0, 1e-8, 100).unwrap();
        assert_eq!(out.point, p);
    }

    #[test]
    fn factor_reconstructs() {
        let inst = crate::instance::generate_instance(&Default::default(), 3).unwrap();
        for i in 0..inst.n() {
            let data = build_g_prox_data(&inst, i, 1.0);
            let dd = DMatrix::from_diagonal(&data.d_diag().map(|v| v * v));
            let expected = data.k().transpose() * data.k() + dd;
            if let Some(f) = data.factored_matrix() {
                assert_relative_eq!(f, expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn psd_project_hand_cases() {
        let p = psd_project(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -1.0])).unwrap();
        assert_relative_eq!(p, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]), epsilon = 1e-12);
        let p = psd_project(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(p, DMatrix::from_element(2, 2, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn delta_prox_keeps_psd_points_and_outside_entries() {
        let inst = pair_instance();
        let x = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.5, 0.9]);
        let p = LiftedPoint::from_locations(&x);
        let q = delta_prox(&inst, 0, &p).unwrap();
        // Entries move by at most the identity-block slack; here S^0 is PSD.
        assert!(q.max_abs_diff(&p) < 1e-12);

        let mut bad = LiftedPoint::zeros(2, 2);
        bad.x[(0, 0)] = 2.0;
        bad.y[(1, 1)] = -1.0;
        let out = delta_prox(&inst, 1, &bad).unwrap();
        // S^1 only spans sensor 1.
        assert_eq!(out.x[(0, 0)], 2.0);
        assert!(out.y[(1, 1)] >= 0.0);
    }

    #[test]
    fn inner_schedule_tightens() {
        let s = InnerSchedule::default();
        assert_eq!(s.tol(0), 1e-4);
        assert_eq!(s.tol(49), 1e-4);
        assert_eq!(s.tol(50), 5e-5);
        assert_eq!(s.tol(10_000), 1e-8);
    }
}
