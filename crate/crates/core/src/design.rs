//! Matrix parameters `(Z, W, L)` for the splitting iteration.
//!
//! Parameters come from Sinkhorn-Knopp balancing of `A + I`: with
//! `S = SK(A + I)` the 2-Block choice `Z = W = 2 [[I, -S], [-S, I]]` is a
//! valid parameter pair that only couples sensors joined by an edge of
//! `G(A)`.

use std::collections::BTreeMap;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::DesignError;
use crate::graph::{self, Adjacency};
use crate::linalg::{asymmetry, max_abs, sym_eigenvalues};

pub const DEFAULT_SK_TOL: f64 = 1e-10;
pub const DEFAULT_SK_MAX_ITER: usize = 10_000;
/// Scaling factors beyond `1 / SCALING_EPS` are taken as divergence.
const SCALING_EPS: f64 = 1e-13;

fn row_sum(b: &DMatrix<f64>, i: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..b.ncols() {
        s += b[(i, j)];
    }
    s
}

fn col_sum(b: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..b.nrows() {
        s += b[(i, j)];
    }
    s
}

/// Doubly stochastic scaling `SK(A)` by alternating row and column
/// normalization.
///
/// Stops once every row sum is within `tol` of one after a column pass
/// (column sums are then exact up to rounding). Symmetric inputs get a
/// symmetric result: the converged matrix is replaced by `(B + Bᵀ)/2`.
pub fn sinkhorn_knopp(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DMatrix<f64>, DesignError> {
    if !a.is_square() {
        return Err(DesignError::Invalid("matrix must be square".into()));
    }
    if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DesignError::Invalid("matrix must be finite and nonnegative".into()));
    }
    let n = a.nrows();
    for i in 0..n {
        if row_sum(a, i) == 0.0 {
            return Err(DesignError::NoSupport(format!("row {i} is all zero")));
        }
        if col_sum(a, i) == 0.0 {
            return Err(DesignError::NoSupport(format!("column {i} is all zero")));
        }
    }

    let mut b = a.clone();
    let mut row_scale = vec![1.0f64; n];
    let mut col_scale = vec![1.0f64; n];
    let mut deviation = f64::INFINITY;
    for iter in 1..=max_iter {
        for i in 0..n {
            let s = row_sum(&b, i);
            for j in 0..n {
                b[(i, j)] /= s;
            }
            row_scale[i] /= s;
        }
        for j in 0..n {
            let s = col_sum(&b, j);
            for i in 0..n {
                b[(i, j)] /= s;
            }
            col_scale[j] /= s;
        }
        if row_scale.iter().chain(&col_scale).any(|&f| f > 1.0 / SCALING_EPS || !f.is_finite()) {
            return Err(DesignError::NoSupport(format!(
                "scaling factors diverged after {iter} iterations"
            )));
        }
        deviation = (0..n).map(|i| (row_sum(&b, i) - 1.0).abs()).fold(0.0, f64::max);
        if deviation <= tol {
            debug!("sinkhorn-knopp converged in {iter} iterations (deviation {deviation:e})");
            if asymmetry(a) == 0.0 {
                let asym = asymmetry(&b);
                debug!("symmetrizing balanced matrix (asymmetry {asym:e})");
                b = (&b + b.transpose()) * 0.5;
            }
            return Ok(b);
        }
    }
    Err(DesignError::NoSupport(format!(
        "no convergence within {max_iter} iterations (row deviation {deviation:e})"
    )))
}

/// `(Z, W, L)` with `Z = 2I − L − Lᵀ`, each `2n × 2n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixParams {
    z: DMatrix<f64>,
    w: DMatrix<f64>,
    l: DMatrix<f64>,
    block_size: usize,
}

impl MatrixParams {
    /// 2-Block parameters `Z = W = 2 [[I, -S], [-S, I]]` from a block `S`.
    pub fn from_block(s: &DMatrix<f64>) -> Result<Self, DesignError> {
        if !s.is_square() {
            return Err(DesignError::Invalid("block must be square".into()));
        }
        let n = s.nrows();
        let mut z = DMatrix::identity(2 * n, 2 * n) * 2.0;
        for i in 0..n {
            for j in 0..n {
                z[(i, n + j)] = -2.0 * s[(j, i)];
                z[(n + i, j)] = -2.0 * s[(i, j)];
            }
        }
        let l = lower_factor(&z)?;
        Ok(Self {
            w: z.clone(),
            z,
            l,
            block_size: n,
        })
    }

    /// Arbitrary parameters; `L` is derived from `Z`. No validity checks
    /// beyond what `lower_factor` needs, see [`validate_params`].
    pub fn new(z: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self, DesignError> {
        if z.shape() != w.shape() || z.nrows() % 2 != 0 {
            return Err(DesignError::Invalid("Z and W must share an even square shape".into()));
        }
        let l = lower_factor(&z)?;
        let block_size = z.nrows() / 2;
        Ok(Self { z, w, l, block_size })
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Number of sensors `n`; the matrices are `2n × 2n`.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// The coupling block `B` read back from `Z = 2 [[I, -Bᵀ], [-B, I]]`.
    pub fn block(&self) -> DMatrix<f64> {
        let n = self.block_size;
        self.z.view((n, 0), (n, n)) * -0.5
    }

    /// Nonzero entries of row `i` of `L` as `(column, value)`, ascending.
    pub fn l_row(&self, i: usize) -> Vec<(usize, f64)> {
        nonzeros(&self.l, i)
    }

    /// Nonzero entries of row `i` of `W` as `(column, value)`, ascending.
    pub fn w_row(&self, i: usize) -> Vec<(usize, f64)> {
        nonzeros(&self.w, i)
    }
}

fn nonzeros(m: &DMatrix<f64>, i: usize) -> Vec<(usize, f64)> {
    (0..m.ncols())
        .filter_map(|j| {
            let v = m[(i, j)];
            (v != 0.0).then_some((j, v))
        })
        .collect()
}

/// Strictly lower-triangular `L` with `2I − L − Lᵀ = Z`.
pub fn lower_factor(z: &DMatrix<f64>) -> Result<DMatrix<f64>, DesignError> {
    if !z.is_square() {
        return Err(DesignError::Invalid("Z must be square".into()));
    }
    let p = z.nrows();
    for i in 0..p {
        if (z[(i, i)] - 2.0).abs() > 1e-12 {
            return Err(DesignError::Invalid(format!(
                "diag(Z)[{i}] = {} but must equal 2",
                z[(i, i)]
            )));
        }
    }
    if asymmetry(z) > 1e-12 {
        return Err(DesignError::Invalid("Z must be symmetric".into()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| if i > j { -z[(i, j)] } else { 0.0 }))
}

/// Parameters from `S = SK(A + I)` for a connected sensor graph.
pub fn two_block_params(adj: &Adjacency, tol: f64) -> Result<MatrixParams, DesignError> {
    if !adj.is_connected() {
        return Err(DesignError::Disconnected);
    }
    let n = adj.n();
    let a_plus_i = adj.to_dense() + DMatrix::identity(n, n);
    let s = sinkhorn_knopp(&a_plus_i, tol, DEFAULT_SK_MAX_ITER)?;
    MatrixParams::from_block(&s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity. For residual checks this must be at most
    /// `threshold`; for `w_null_space` it is `λ₂(W)`, which must exceed it.
    pub value: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn residual_check(name: &str, value: f64, tol: f64) -> Check {
    Check {
        name: name.into(),
        passed: value <= tol,
        value,
        threshold: tol,
    }
}

/// Measures every requirement on `(Z, W, L)` together with 2-Block
/// structure and adherence to `adj`.
pub fn validate_params(params: &MatrixParams, adj: &Adjacency, tol: f64) -> ValidationReport {
    let z = &params.z;
    let w = &params.w;
    let l = &params.l;
    let p = z.nrows();
    let n = params.block_size;
    let ones = DMatrix::from_element(p, 1, 1.0);
    let mut checks = Vec::new();

    checks.push(residual_check("z_symmetric", asymmetry(z), tol));
    checks.push(residual_check("w_symmetric", asymmetry(w), tol));

    let z_minus_w_min = sym_eigenvalues(&(z - w)).first().copied().unwrap_or(0.0);
    checks.push(residual_check("z_minus_w_psd", (-z_minus_w_min).max(0.0), tol));

    let w_eigs = sym_eigenvalues(w);
    let w_min = w_eigs.first().copied().unwrap_or(0.0);
    checks.push(residual_check("w_psd", (-w_min).max(0.0), tol));
    checks.push(residual_check("w_ones_null", max_abs(&(w * &ones)), tol));

    let lambda2 = w_eigs.get(1).copied().unwrap_or(0.0);
    checks.push(Check {
        name: "w_null_space".into(),
        passed: w_min.abs() <= tol && lambda2 > tol,
        value: lambda2,
        threshold: tol,
    });

    let diag_dev = (0..p).map(|i| (z[(i, i)] - 2.0).abs()).fold(0.0, f64::max);
    checks.push(residual_check("z_diag_two", diag_dev, tol));
    checks.push(residual_check("z_ones_sum_zero", (ones.transpose() * z * &ones)[(0, 0)].abs(), tol));

    let recon = DMatrix::identity(p, p) * 2.0 - l - l.transpose();
    let upper = (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .map(|(i, j)| l[(i, j)].abs())
        .fold(0.0, f64::max);
    checks.push(residual_check("l_reconstruction", max_abs(&(recon - z)).max(upper), tol));

    let eye = DMatrix::<f64>::identity(n, n) * 2.0;
    let diag_blocks = max_abs(&(z.view((0, 0), (n, n)) - &eye)).max(max_abs(&(z.view((n, n), (n, n)) - &eye)));
    checks.push(residual_check("two_block_structure", diag_blocks, tol));

    let adherence = if adj.n() != n {
        f64::INFINITY
    } else {
        let b = params.block();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j || adj.contains(i, j) {
                    continue;
                }
                for v in [
                    b[(i, j)],
                    b[(j, i)],
                    w[(i, j)],
                    w[(j + n, i)],
                    w[(i + n, j)],
                    w[(i + n, j + n)],
                ] {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    };
    checks.push(residual_check("two_block_adherence", adherence, tol));

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { passed, checks }
}

/// Whether the weighted graph over the nonzero pattern of `Z` is connected.
pub fn z_pattern_connected(params: &MatrixParams) -> bool {
    graph::pattern_connected(&params.z, 0.0)
}

/// Result of balancing `A + I` by message passing between sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct DecentralizedBalance {
    /// Node `i`'s symmetrized weights for its incident edges, self-loop
    /// included, keyed by the other endpoint.
    pub weights: Vec<BTreeMap<usize, f64>>,
    pub rounds: usize,
    /// Edge-weight transmissions in one exchange phase (`2|E|`). A round has
    /// two phases: row owners to column owners and back.
    pub messages_per_exchange: usize,
    pub weight_messages: usize,
    /// One local-deviation broadcast per directed edge per round.
    pub control_messages: usize,
    pub deviation: f64,
}

impl DecentralizedBalance {
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.weights.len();
        let mut s = DMatrix::zeros(n, n);
        for (i, row) in self.weights.iter().enumerate() {
            for (&j, &v) in row {
                s[(i, j)] = v;
            }
        }
        s
    }
}

/// Sinkhorn-Knopp on `A + I` run as `n` nodes that only talk to graph
/// neighbors.
///
/// Each round a node rescales the weights of its own row, sends each weight
/// to the owner of that column, the column owner rescales what it received
/// and sends the weights back. Nodes then broadcast their local row-sum
/// deviation; the run ends when every deviation is at most `tol`.
pub fn sinkhorn_knopp_decentralized(
    adj: &Adjacency,
    rounds: usize,
    tol: f64,
) -> Result<DecentralizedBalance, DesignError> {
    if !adj.is_connected() {
        return Err(DesignError::Disconnected);
    }
    let n = adj.n();
    let mut rows: Vec<BTreeMap<usize, f64>> = (0..n)
        .map(|i| adj.closed_neighborhood(i).into_iter().map(|j| (j, 1.0)).collect())
        .collect();
    let mut cols: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let directed_edges = 2 * adj.edge_count();
    let mut weight_messages = 0;
    let mut control_messages = 0;
    let mut deviation = f64::INFINITY;

    for round in 1..=rounds {
        for row in rows.iter_mut() {
            let s: f64 = row.values().sum();
            for v in row.values_mut() {
                *v /= s;
            }
        }
        // Row owner i -> column owner j.
        for (i, row) in rows.iter().enumerate() {
            for (&j, &v) in row {
                if i != j {
                    weight_messages += 1;
                }
                cols[j].insert(i, v);
            }
        }
        for col in cols.iter_mut() {
            let s: f64 = col.values().sum();
            for v in col.values_mut() {
                *v /= s;
            }
        }
        // Column owner j -> row owner i.
        for (j, col) in cols.iter().enumerate() {
            for (&i, &v) in col {
                if i != j {
                    weight_messages += 1;
                }
                rows[i].insert(j, v);
            }
        }
        let local: Vec<f64> = rows
            .iter()
            .map(|row| (row.values().sum::<f64>() - 1.0).abs())
            .collect();
        control_messages += directed_edges;
        deviation = local.iter().copied().fold(0.0, f64::max);
        if deviation <= tol {
            let weights = (0..n)
                .map(|i| {
                    rows[i]
                        .iter()
                        .map(|(&j, &v)| (j, (v + cols[i][&j]) * 0.5))
                        .collect()
                })
                .collect();
            return Ok(DecentralizedBalance {
                weights,
                rounds: round,
                messages_per_exchange: directed_edges,
                weight_messages,
                control_messages,
                deviation,
            });
        }
    }
    Err(DesignError::NotConverged { rounds, deviation })
}

/// JSON form of a 2-Block design: the block `S` (dense for `n ≤ 512`,
/// triplets above) plus its validation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamsFile {
    pub n: usize,
    #[serde(rename = "S_dense", default, skip_serializing_if = "Option::is_none")]
    pub s_dense: Option<Vec<Vec<f64>>>,
    #[serde(rename = "S_triplets", default, skip_serializing_if = "Option::is_none")]
    pub s_triplets: Option<Vec<(usize, usize, f64)>>,
    pub checks: ValidationReport,
}

pub const DENSE_LIMIT: usize = 512;

impl ParamsFile {
    pub fn new(params: &MatrixParams, checks: ValidationReport) -> Self {
        let s = params.block();
        let n = params.block_size();
        if n <= DENSE_LIMIT {
            Self {
                n,
                s_dense: Some(crate::instance::matrix_to_rows(&s)),
                s_triplets: None,
                checks,
            }
        } else {
            let mut trip = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if s[(i, j)] != 0.0 {
                        trip.push((i, j, s[(i, j)]));
                    }
                }
            }
            Self {
                n,
                s_dense: None,
                s_triplets: Some(trip),
                checks,
            }
        }
    }

    pub fn to_params(&self) -> Result<MatrixParams, DesignError> {
        let s = match (&self.s_dense, &self.s_triplets) {
            (Some(rows), _) => crate::instance::rows_to_matrix(rows, self.n, "S").map_err(DesignError::Invalid)?,
            (None, Some(trip)) => {
                let mut s = DMatrix::zeros(self.n, self.n);
                for &(i, j, v) in trip {
                    if i >= self.n || j >= self.n {
                        return Err(DesignError::Invalid(format!("triplet ({i}, {j}) out of range")));
                    }
                    s[(i, j)] = v;
                }
                s
            }
            (None, None) => return Err(DesignError::Invalid("no S matrix present".into())),
        };
        if s.nrows() != self.n {
            return Err(DesignError::Invalid("S has the wrong number of rows".into()));
        }
        MatrixParams::from_block(&s)
    }
}
