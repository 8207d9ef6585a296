//! The `(X, Y)` pair that every splitting node holds a copy of.
//!
//! `X` is the `n × d` block of location estimates and `Y` the symmetric
//! `n × n` Gram-like block of the lifted matrix `[[I, Xᵀ], [X, Y]]`.

use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedPoint {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl LiftedPoint {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            x: DMatrix::zeros(n, d),
            y: DMatrix::zeros(n, n),
        }
    }

    /// `(X, X Xᵀ)`, the lift of a plain location matrix.
    pub fn from_locations(x: &DMatrix<f64>) -> Self {
        let y = x * x.transpose();
        Self { x: x.clone(), y }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.x.shape() == other.x.shape() && self.y.shape() == other.y.shape()
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (s, o) in self.x.iter_mut().zip(other.x.iter()) {
            *s += a * o;
        }
        for (s, o) in self.y.iter_mut().zip(other.y.iter()) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.x *= a;
        self.y *= a;
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: &self.x - &other.x,
            y: &self.y - &other.y,
        }
    }

    /// Plain Frobenius norm over both blocks, `sqrt(‖X‖² + ‖Y‖²)`.
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.x.norm_squared() + self.y.norm_squared()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let dx = self
            .x
            .iter()
            .zip(other.x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dy = self
            .y
            .iter()
            .zip(other.y.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        dx.max(dy)
    }

    pub fn symmetrize(&mut self) {
        let t = self.y.transpose();
        self.y = (&self.y + t) * 0.5;
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// Number of `f64` entries carried when the point is sent in full.
    pub fn entry_count(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn byte_size(&self) -> usize {
        self.entry_count() * std::mem::size_of::<f64>()
    }

    /// `Σ_k coef_k · p_k`, accumulated in the order given.
    ///
    /// Both execution modes of the solvers build every linear combination
    /// through this function so that they agree bit for bit.
    pub fn combination<'a, I>(n: usize, d: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (f64, &'a LiftedPoint)>,
    {
        let mut acc = Self::zeros(n, d);
        for (c, p) in terms {
            acc.axpy(c, p);
        }
        acc
    }

    /// Arithmetic mean of a non-empty set of points.
    pub fn mean<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a LiftedPoint>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for p in iter {
            acc.axpy(1.0, p);
            count += 1;
        }
        acc.scale(1.0 / count as f64);
        Some(acc)
    }
}
