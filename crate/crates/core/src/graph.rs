//! Undirected communication graphs over the sensors.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::DesignError;

/// Symmetric 0/1 adjacency with an empty diagonal, stored as sorted
/// neighbor lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds from undirected edges. Self-loops are rejected; duplicates
    /// collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, DesignError> {
        let mut adj = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(DesignError::Invalid(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(DesignError::Invalid(format!("self-loop on node {i}")));
            }
            adj.neighbors[i].push(j);
            adj.neighbors[j].push(i);
        }
        for list in &mut adj.neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(adj)
    }

    /// Reads a dense matrix, requiring entries in {0, 1}, symmetry and a zero
    /// diagonal.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self, DesignError> {
        if !a.is_square() {
            return Err(DesignError::Invalid("adjacency must be square".into()));
        }
        let n = a.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(DesignError::Invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = a[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(DesignError::Invalid(format!(
                        "entry ({i}, {j}) = {v} is not binary"
                    )));
                }
                if v != a[(j, i)] {
                    return Err(DesignError::Invalid(format!(
                        "asymmetric entry at ({i}, {j})"
                    )));
                }
                if v == 1.0 && i < j {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// Neighbor list of `i` with `i` itself merged in, ascending.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut out = self.neighbors[i].clone();
        let pos = out.binary_search(&i).unwrap_err();
        out.insert(pos, i);
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

/// Connectivity of the graph over the nonzero off-diagonal pattern of a
/// square matrix (entries with magnitude above `tol`).
pub fn pattern_connected(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)].abs() > tol || m[(j, i)].abs() > tol {
                edges.push((i, j));
            }
        }
    }
    Adjacency::from_edges(n, &edges)
        .map(|a| a.is_connected())
        .unwrap_or(false)
}
