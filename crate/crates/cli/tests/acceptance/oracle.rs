//! Reference computations written without the library's solvers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use snl_core::Adjacency;

pub fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Adjacency {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    Adjacency::from_edges(n, &edges).unwrap()
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian-like draw.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(k, k);
    for c in 0..k {
        let mut v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..2 {
            for p in 0..c {
                let col = q.column(p).clone_owned();
                let proj = col.dot(&v);
                v -= col * proj;
            }
        }
        let nv = v.norm();
        q.set_column(c, &(v / nv));
    }
    q
}

/// Smallest and second smallest eigenvalue of a symmetric matrix by the
/// Jacobi rotation method.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = (m + m.transpose()) * 0.5;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.norm()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

/// Single-sensor prox problem over the free coordinates
/// `z = (x_1, x_2, Y_ii, Y_jj for j ∈ N_i, Y_ij for j ∈ N_i)`:
///
/// `min α Σ_r |g_rᵀ z + h_r| + Σ_c w_c (z_c − z⁰_c)²`.
pub struct ProxToy {
    pub alpha: f64,
    pub g: Vec<DVector<f64>>,
    pub h: Vec<f64>,
    pub w: DVector<f64>,
    pub z0: DVector<f64>,
}

impl ProxToy {
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        let mut f = 0.0;
        for (g, h) in self.g.iter().zip(&self.h) {
            f += self.alpha * (g.dot(z) + h).abs();
        }
        for c in 0..z.len() {
            f += self.w[c] * (z[c] - self.z0[c]).powi(2);
        }
        f
    }

    /// Candidate for one assignment of the terms: `Some(s)` linearizes the
    /// term with sign `s`, `None` forces it to zero.
    fn candidate(&self, pattern: &[Option<f64>]) -> Option<DVector<f64>> {
        let k = self.z0.len();
        let inv2w = DVector::from_fn(k, |c, _| 0.5 / self.w[c]);
        let mut lin = DVector::zeros(k);
        let mut active = Vec::new();
        for (r, p) in pattern.iter().enumerate() {
            match p {
                Some(s) => lin += &self.g[r] * (self.alpha * s),
                None => active.push(r),
            }
        }
        let base = &self.z0 - inv2w.component_mul(&lin);
        if active.is_empty() {
            return Some(base);
        }
        let ga = DMatrix::from_fn(active.len(), k, |a, c| self.g[active[a]][c]);
        let scaled = DMatrix::from_fn(k, active.len(), |c, a| inv2w[c] * ga[(a, c)]);
        let gram = &ga * &scaled;
        let rhs = DVector::from_fn(active.len(), |a, _| self.g[active[a]].dot(&base) + self.h[active[a]]);
        let mu = gram.svd(true, true).solve(&rhs, 1e-12).ok()?;
        Some(base - scaled * mu)
    }

    /// Exact minimizer: every sign/zero assignment of the absolute-value
    /// terms is solved as an equality-constrained quadratic and the best
    /// candidate under the true objective is kept, then polished by a
    /// shrinking compass search.
    pub fn solve(&self) -> DVector<f64> {
        let r = self.g.len();
        let mut best = self.z0.clone();
        let mut best_f = self.value(&best);
        for code in 0..3usize.pow(r as u32) {
            let mut c = code;
            let pattern: Vec<Option<f64>> = (0..r)
                .map(|_| {
                    let p = match c % 3 {
                        0 => Some(1.0),
                        1 => Some(-1.0),
                        _ => None,
                    };
                    c /= 3;
                    p
                })
                .collect();
            if let Some(z) = self.candidate(&pattern) {
                let f = self.value(&z);
                if f < best_f {
                    best_f = f;
                    best = z;
                }
            }
        }
        let mut step = 1e-2;
        while step > 1e-10 {
            let mut improved = false;
            for c in 0..best.len() {
                for s in [step, -step] {
                    let mut z = best.clone();
                    z[c] += s;
                    let f = self.value(&z);
                    if f < best_f {
                        best_f = f;
                        best = z;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    }
}
