use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of a planted-partition stochastic block model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunityParams {
    pub nodes: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub weight_in: f64,
    pub weight_out: f64,
}

impl CommunityParams {
    /// Community of node `i`: nodes are split into contiguous blocks whose
    /// sizes differ by at most one.
    pub fn community_of(&self, i: usize) -> usize {
        i * self.communities / self.nodes
    }

    fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_in) || !prob(self.p_out) || self.p_out > self.p_in {
            return Err(Error::Argument(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in = {}, p_out = {}",
                self.p_in, self.p_out
            )));
        }
        if self.communities == 0 || self.communities > self.nodes {
            return Err(Error::Argument(format!(
                "{} communities for {} nodes",
                self.communities, self.nodes
            )));
        }
        if !(self.weight_in >= 0.0 && self.weight_out >= 0.0)
            || !self.weight_in.is_finite()
            || !self.weight_out.is_finite()
        {
            return Err(Error::Argument("edge weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Samples a stochastic-block-model graph.
///
/// Each intra-community pair is joined with probability `p_in` and weight
/// `weight_in`, each inter-community pair with `p_out` and `weight_out`.
pub fn generate_community_graph(params: &CommunityParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let n = params.nodes;
    let mut rng = rng::seeded(seed);
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let same = params.community_of(i) == params.community_of(j);
            let (p, weight) = if same {
                (params.p_in, params.weight_in)
            } else {
                (params.p_out, params.weight_out)
            };
            // One draw per pair regardless of p keeps the stream aligned
            // across parameter changes.
            let u: f64 = rng.random();
            if u < p {
                w[(i, j)] = weight;
                w[(j, i)] = weight;
            }
        }
    }
    Graph::new(w)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every off-diagonal pair, drops
/// weights that turn negative and mirrors the upper triangle.
pub fn perturb_graph(graph: &Graph, sigma: f64, seed: u64) -> Result<Graph> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(graph.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let n = graph.node_count();
    let mut w = graph.adjacency().clone();
    for j in 0..n {
        for i in 0..j {
            let v = (w[(i, j)] + normal.sample(&mut rng)).max(0.0);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Graph::new(w)
}

/// Cosine k-nearest-neighbour graph over the rows of `rows`.
///
/// Node `i` links to its `k_nn` most similar rows (ties broken by the lower
/// index); the relation is symmetrized by union and weighted by the clipped
/// similarity `max(cos, 0)`. All-zero rows have similarity 0 to everything.
pub fn knn_graph(rows: &DMatrix<f64>, k_nn: usize) -> Result<Graph> {
    let m = rows.nrows();
    if k_nn >= m {
        return Err(Error::Argument(format!(
            "k_nn = {k_nn} must be smaller than the node count {m}"
        )));
    }
    let sim = cosine_similarity(rows);
    let mut w = DMatrix::zeros(m, m);
    let mut candidates: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        candidates.clear();
        candidates.extend((0..m).filter(|&j| j != i));
        candidates.sort_by(|&a, &b| sim[(i, b)].total_cmp(&sim[(i, a)]).then(a.cmp(&b)));
        for &j in candidates.iter().take(k_nn) {
            let s = sim[(i, j)].max(0.0);
            w[(i, j)] = s;
            w[(j, i)] = s;
        }
    }
    Graph::new(w)
}

/// Pairwise cosine similarity of rows; the diagonal is zeroed.
pub(crate) fn cosine_similarity(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let mut normalized = rows.clone();
    for mut r in normalized.row_iter_mut() {
        let norm = r.norm();
        if norm > 0.0 {
            r /= norm;
        }
    }
    let mut sim = &normalized * normalized.transpose();
    // Symmetrize exactly so w[(i, j)] and w[(j, i)] agree bitwise.
    for j in 0..sim.ncols() {
        sim[(j, j)] = 0.0;
        for i in 0..j {
            let v = sim[(i, j)];
            sim[(j, i)] = v;
        }
    }
    sim
}
