//! Central finite-difference verification of analytic gradients.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::funcmap::FunctionalModel;
use crate::graph::{generate_community_graph, spectral_decompose, CommunityParams};
use crate::objective::{Mask, MaskedMatrix, Objective, Observations, RegTarget, SgmcWeights};
use crate::rng;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Worst relative deviation per parameter block, measured as
/// `max |analytic - numeric| / max(||numeric||_inf, 1e-12)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub c: f64,
    pub p: f64,
    pub q: f64,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.c.max(self.p).max(self.q)
    }
}

#[derive(Clone, Copy)]
enum Block {
    C,
    P,
    Q,
}

fn perturbed(model: &FunctionalModel, block: Block, i: usize, j: usize, delta: f64) -> FunctionalModel {
    let mut m = model.clone();
    let (c, p, q) = m.parts_mut();
    let target = match block {
        Block::C => c,
        Block::P => p,
        Block::Q => q,
    };
    target[(i, j)] += delta;
    m
}

/// Numerical gradient of `objective` by central differences with step `h`.
pub fn numerical_gradients(
    objective: &Objective,
    model: &FunctionalModel,
    obs: &Observations,
    h: f64,
) -> Result<[DMatrix<f64>; 3]> {
    let k = model.k();
    let mut out = [DMatrix::zeros(k, k), DMatrix::zeros(k, k), DMatrix::zeros(k, k)];
    for (slot, block) in out.iter_mut().zip([Block::C, Block::P, Block::Q]) {
        for j in 0..k {
            for i in 0..k {
                let plus = objective.energy(&perturbed(model, block, i, j, h), obs)?.total;
                let minus = objective.energy(&perturbed(model, block, i, j, -h), obs)?.total;
                slot[(i, j)] = (plus - minus) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).amax() / numeric.amax().max(1e-12)
}

/// Compares analytic gradients with central differences.
pub fn check_gradients(objective: &Objective, model: &FunctionalModel, obs: &Observations, h: f64) -> Result<GradCheck> {
    let analytic = objective.gradients(model, obs)?;
    let [c, p, q] = numerical_gradients(objective, model, obs, h)?;
    Ok(GradCheck {
        c: relative_error(&analytic.c, &c),
        p: relative_error(&analytic.p, &p),
        q: relative_error(&analytic.q, &q),
    })
}

/// Random small problem: SBM graphs, generic `(C, P, Q)` and a random
/// partially observed target.
pub fn random_instance(m: usize, n: usize, k: usize, seed: u64) -> Result<(FunctionalModel, Observations)> {
    let mut r = rng::seeded(seed);
    let graph_basis = |nodes: usize, s: u64| -> Result<Arc<_>> {
        let g = generate_community_graph(
            &CommunityParams {
                nodes,
                communities: 2.min(nodes),
                p_in: 0.8,
                p_out: 0.2,
                weight_in: 1.0,
                weight_out: 0.5,
            },
            s,
        )?;
        Ok(Arc::new(spectral_decompose(&g.laplacian(), k)?))
    };
    let row_basis = graph_basis(m, rng::derive_seed(seed, 1))?;
    let col_basis = graph_basis(n, rng::derive_seed(seed, 2))?;
    let mut normal = |rows: usize, cols: usize, scale: f64| {
        DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut r);
            scale * z
        })
    };
    let c = normal(k, k, 1.0);
    let p = DMatrix::identity(k, k) + normal(k, k, 0.3);
    let q = DMatrix::identity(k, k) + normal(k, k, 0.3);
    let target = normal(m, n, 1.0);
    let mut mr = rng::seeded(rng::derive_seed(seed, 3));
    let mask = Mask::from_indices(
        m,
        n,
        (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).filter(|_| mr.random::<f64>() < 0.6),
    )?;
    let model = FunctionalModel::new(c, p, q, row_basis, col_basis)?;
    Ok((model, Observations::new(&MaskedMatrix::observe(&target, mask)?)))
}

/// Outcome of one instance of [`gradient_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCase {
    pub objective: &'static str,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub error: GradCheck,
}

/// Checks the commutativity objective (both penalty targets) and the SGMC
/// objective on `instances` random problems each, with `m, n <= 12` and
/// `2 <= k <= 5`.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Vec<SuiteCase>> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(3 * instances);
    for _ in 0..instances {
        let rows = r.random_range(3..=12);
        let cols = r.random_range(3..=12);
        // k = 1 makes every regularizer vanish.
        let k = r.random_range(2..=5.min(rows).min(cols));
        let case_seed: u64 = r.random();
        let mu = 10f64.powf(r.random_range(-2.0..0.0));
        let sgmc = SgmcWeights {
            dirichlet_rows: r.random_range(0.01..1.0),
            dirichlet_cols: r.random_range(0.01..1.0),
            diag_rows: r.random_range(0.01..1.0),
            diag_cols: r.random_range(0.01..1.0),
        };
        let (model, obs) = random_instance(rows, cols, k, case_seed)?;
        let objectives = [
            ("commutativity", Objective::Commutativity { mu, target: RegTarget::Effective }),
            ("commutativity-raw", Objective::Commutativity { mu, target: RegTarget::Raw }),
            ("sgmc", Objective::Sgmc(sgmc)),
        ];
        for (name, objective) in objectives {
            out.push(SuiteCase {
                objective: name,
                seed: case_seed,
                rows,
                cols,
                k,
                error: check_gradients(&objective, &model, &obs, FD_STEP)?,
            });
        }
    }
    Ok(out)
}
