//! Weighted undirected graphs and their combinatorial Laplacians.
//!
//! A [`Graph`] stores a dense symmetric adjacency matrix. At the sizes this
//! crate targets (a few thousand nodes) dense storage keeps the Laplacian and
//! its eigendecomposition simple.

mod generators;
mod io;
mod spectral;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use generators::{generate_community_graph, knn_graph, perturb_graph, CommunityParams};
pub use io::{load_adjacency, save_adjacency, AdjacencyFormat};
pub use spectral::{spectral_decompose, SpectralBasis};

/// Absolute tolerance for the symmetry check on adjacency matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Weighted undirected graph with a dense, symmetric, nonnegative adjacency
/// matrix and an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl Graph {
    /// Validates `adjacency` and wraps it.
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        validate_adjacency(&adjacency)?;
        Ok(Graph {
            adjacency,
            labels: None,
        })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            adjacency: DMatrix::zeros(n, n),
            labels: None,
        }
    }

    /// Builds a graph from `(i, j, w)` edges with 0-based indices.
    /// Repeated edges keep the larger weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::<f64>::zeros(n, n);
        for &(i, j, weight) in edges {
            if i >= n || j >= n {
                return Err(Error::Argument(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::Validation(format!("self-loop at node {i}")));
            }
            let v = w[(i, j)].max(weight);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        Graph::new(w)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.node_count() {
            return Err(Error::Argument(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.node_count()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of node pairs `i < j` with positive weight.
    pub fn edge_count(&self) -> usize {
        let n = self.node_count();
        (0..n)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|&(i, j)| self.adjacency[(i, j)] > 0.0)
            .count()
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_iter().map(|r| r.sum()).collect()
    }

    /// Combinatorial Laplacian `L = D - W` with `D = diag(W 1)`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.adjacency.clone();
        for (i, d) in self.degrees().into_iter().enumerate() {
            l[(i, i)] = d;
        }
        l
    }

    /// Sum over unordered edges of `w_ij * (x_i - x_j)^2`.
    ///
    /// Equals `x^T L x`; kept as an independent route for checking energies.
    pub fn edge_dirichlet(&self, x: &[f64]) -> f64 {
        let n = self.node_count();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..j {
                let w = self.adjacency[(i, j)];
                if w != 0.0 {
                    let d = x[i] - x[j];
                    acc += w * d * d;
                }
            }
        }
        acc
    }

    /// Connected-component count, treating any positive weight as an edge.
    pub fn component_count(&self) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if !seen[v] && self.adjacency[(u, v)] > 0.0 {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }
}

/// Builds the Laplacian of a raw adjacency matrix after validating it.
pub fn build_laplacian(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_adjacency(adjacency)?;
    let d = adjacency.row_sum();
    let mut l = -adjacency.clone();
    for i in 0..l.nrows() {
        l[(i, i)] = d[i];
    }
    Ok(l)
}

fn validate_adjacency(w: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::Validation(format!(
            "adjacency must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let n = w.nrows();
    for j in 0..n {
        if w[(j, j)] != 0.0 {
            return Err(Error::Validation(format!(
                "nonzero diagonal entry {} at node {j}",
                w[(j, j)]
            )));
        }
        for i in 0..n {
            let v = w[(i, j)];
            if !v.is_finite() {
                return Err(Error::Validation(format!("non-finite weight at ({i}, {j})")));
            }
            if v < 0.0 {
                return Err(Error::Validation(format!("negative weight {v} at ({i}, {j})")));
            }
            if i < j && (v - w[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Validation(format!(
                    "adjacency not symmetric at ({i}, {j}): {v} vs {}",
                    w[(j, i)]
                )));
            }
        }
    }
    Ok(())
}
