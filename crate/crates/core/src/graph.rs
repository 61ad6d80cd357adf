//! Undirected weighted communication topology.
//!
//! Node indices are zero-based in this API. Scenario files use one-based
//! indices and are converted on load.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    weights: Matrix,
}

impl WeightedGraph {
    /// Builds a graph from a full adjacency matrix. The matrix must be
    /// square, exactly symmetric, nonnegative and have a zero diagonal.
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() || weights.nrows() == 0 {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square and non-empty, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        let n = weights.nrows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "self-loop at node {} (weight {})",
                    i + 1,
                    weights[(i, i)]
                )));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "weight of pair ({}, {}) must be finite and nonnegative, got {w}",
                        i + 1,
                        j + 1
                    )));
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency not symmetric at pair ({}, {}): {} vs {}",
                        i + 1,
                        j + 1,
                        w,
                        weights[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from zero-based `(i, j, weight)` triples. Listing both
    /// orientations of an edge is allowed only with equal weights.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut weights = Matrix::zeros(node_count, node_count);
        let mut seen = vec![false; node_count * node_count];
        for &(i, j, w) in edges {
            if i >= node_count || j >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 1..={node_count}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", i + 1)));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has invalid weight {w}",
                    i + 1,
                    j + 1
                )));
            }
            let (a, b) = (i.min(j), i.max(j));
            if seen[a * node_count + b] {
                if weights[(a, b)] != w {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency not symmetric at pair ({}, {}): {} vs {}",
                        a + 1,
                        b + 1,
                        weights[(a, b)],
                        w
                    )));
                }
                continue;
            }
            seen[a * node_count + b] = true;
            weights[(a, b)] = w;
            weights[(b, a)] = w;
        }
        Ok(Self { weights })
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.weights
    }

    /// Edges with positive weight as zero-based `(i, j, w)`, `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.node_count();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.weights[(i, j)] > 0.0)
            .map(|(i, j)| (i, j, self.weights[(i, j)]))
            .collect()
    }

    /// Weighted degree `l_ii`.
    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn laplacian(&self) -> Matrix {
        let n = self.node_count();
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                self.degree(i)
            } else {
                -self.weights[(i, j)]
            }
        })
    }

    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>> {
        let n = self.node_count();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok((0..n).filter(|&j| self.weights[(i, j)] > 0.0).collect())
    }

    /// Breadth-first reachability from node 0 over positive-weight edges.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !visited[j] && self.weights[(i, j)] > 0.0 {
                    visited[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        Ok(Self {
            weights: Matrix::from_fn(n, n, |i, j| self.weights[(perm[i], perm[j])]),
        })
    }
}

/// Applies `(L ⊗ I_n)` to a stacked per-agent vector.
pub fn laplacian_apply(laplacian: &Matrix, z: &[Vector]) -> Vec<Vector> {
    let n = z.first().map_or(0, Vector::len);
    (0..z.len())
        .map(|i| {
            let mut out = Vector::zeros(n);
            for (j, zj) in z.iter().enumerate() {
                let l = laplacian[(i, j)];
                if l != 0.0 {
                    out.axpy(l, zj, 1.0);
                }
            }
            out
        })
        .collect()
}

/// `Zᵀ (L ⊗ I_n) Y`.
pub fn laplacian_form(laplacian: &Matrix, z: &[Vector], y: &[Vector]) -> f64 {
    laplacian_apply(laplacian, y)
        .iter()
        .zip(z)
        .map(|(ly, zi)| zi.dot(ly))
        .sum()
}

/// Consensus violation `‖(L ⊗ I_n) Z‖`.
pub fn primal_residual(laplacian: &Matrix, z: &[Vector]) -> f64 {
    crate::linalg::sum_sq(&laplacian_apply(laplacian, z)).sqrt()
}
