use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{method_fit_config, FitOverride, MethodOverrides, rmse, run_parallel, ExperimentReport, Method, Record, ReferencePoint, Stopwatch};
use crate::error::{Error, Result};
use crate::funcmap::synthesize_bandlimited;
use crate::graph::{generate_community_graph, perturb_graph, spectral_decompose, CommunityParams, Graph, SpectralBasis};
use crate::objective::{Mask, MaskedMatrix};
use crate::optimizer::{fit, split_observed, FitConfig, OptimizerKind};
use crate::data::sample_mask;
use crate::rng::derive_seed;

// Seed streams derived from each experiment seed.
const STREAM_ROW_GRAPH: u64 = 1;
const STREAM_COL_GRAPH: u64 = 2;
const STREAM_MATRIX: u64 = 3;
const STREAM_MASK: u64 = 4;
const STREAM_SPLIT: u64 = 5;
const STREAM_ROW_NOISE: u64 = 6;
const STREAM_COL_NOISE: u64 = 7;

/// Community graph shape; the node count comes from the matrix size. The
/// default edge weight of 0.01 keeps the Laplacian spectrum small enough that
/// the commutativity penalty at `mu = 1e-5` does not dominate the data term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSpec {
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub weight_in: f64,
    pub weight_out: f64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            communities: 5,
            p_in: 0.5,
            p_out: 0.02,
            weight_in: 0.01,
            weight_out: 0.01,
        }
    }
}

impl GraphSpec {
    /// Generator parameters for a graph with `nodes` nodes.
    pub fn params(&self, nodes: usize) -> CommunityParams {
        CommunityParams {
            nodes,
            communities: self.communities,
            p_in: self.p_in,
            p_out: self.p_out,
            weight_in: self.weight_in,
            weight_out: self.weight_out,
        }
    }
}

/// Settings shared by the rank, density and noise sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub cols: usize,
    pub row_graph: GraphSpec,
    pub col_graph: GraphSpec,
    /// Basis size used both to synthesize and to fit.
    pub k: usize,
    /// Root-mean-square of the synthesized matrix.
    pub scale: f64,
    /// Rank used by the density and noise sweeps.
    pub rank: usize,
    /// Sampling density used by the rank and noise sweeps.
    pub density: f64,
    pub ranks: Vec<usize>,
    pub densities: Vec<f64>,
    /// Standard deviations of the adjacency noise as multiples of each
    /// graph's within-community edge weight.
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Base fit settings; each method derives its own from these.
    pub fit: FitConfig,
    /// Optimizer settings that differ per method.
    pub overrides: MethodOverrides,
    /// Record wall-clock seconds (off keeps reports byte-identical).
    pub record_timing: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            rows: 150,
            cols: 200,
            row_graph: GraphSpec::default(),
            col_graph: GraphSpec::default(),
            k: 30,
            scale: 1.0,
            rank: 10,
            density: 0.10,
            ranks: vec![5, 10, 12, 15, 20],
            densities: vec![0.01, 0.05, 0.10, 0.20],
            noise_levels: vec![0.0, 0.001, 0.002, 0.004],
            seeds: (0..5).collect(),
            methods: vec![Method::Ours, Method::OursFm],
            fit: FitConfig {
                k: 30,
                optimizer: OptimizerKind::Adam,
                learning_rate: 1e-4,
                max_iters: Some(40_000),
                ..FitConfig::default()
            },
            // The data-only problem is a convex quadratic; plain descent
            // with a large step reaches machine precision there.
            overrides: MethodOverrides::from([(
                Method::OursFm,
                FitOverride {
                    optimizer: Some(OptimizerKind::PlainGd),
                    learning_rate: Some(0.5),
                    max_iters: Some(20_000),
                    patience: None,
                },
            )]),
            record_timing: false,
        }
    }
}

/// One generated problem: ground truth, sampled entries and fitting bases.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub truth: DMatrix<f64>,
    pub observed: Mask,
    pub row_basis: Arc<SpectralBasis>,
    pub col_basis: Arc<SpectralBasis>,
}

impl SyntheticInstance {
    /// The truth is band-limited on the clean graphs; the fitting bases come
    /// from graphs perturbed with standard deviation `noise` times the
    /// within-community weight (the clean ones when it is zero). The mask depends only on the seed and density.
    pub fn generate(cfg: &SyntheticConfig, rank: usize, density: f64, noise: f64, seed: u64) -> Result<Self> {
        let row_graph = generate_community_graph(&cfg.row_graph.params(cfg.rows), derive_seed(seed, STREAM_ROW_GRAPH))?;
        let col_graph = generate_community_graph(&cfg.col_graph.params(cfg.cols), derive_seed(seed, STREAM_COL_GRAPH))?;
        let basis = |g: &Graph| -> Result<Arc<SpectralBasis>> { Ok(Arc::new(spectral_decompose(&g.laplacian(), cfg.k)?)) };
        let (clean_rows, clean_cols) = (basis(&row_graph)?, basis(&col_graph)?);
        let truth = synthesize_bandlimited(&clean_rows, &clean_cols, rank, derive_seed(seed, STREAM_MATRIX), cfg.scale)?;
        let observed = sample_mask(cfg.rows, cfg.cols, density, derive_seed(seed, STREAM_MASK))?;
        let (row_basis, col_basis) = if noise == 0.0 {
            (clean_rows, clean_cols)
        } else {
            (
                basis(&perturb_graph(&row_graph, noise * cfg.row_graph.weight_in, derive_seed(seed, STREAM_ROW_NOISE))?)?,
                basis(&perturb_graph(&col_graph, noise * cfg.col_graph.weight_in, derive_seed(seed, STREAM_COL_NOISE))?)?,
            )
        };
        Ok(SyntheticInstance {
            truth,
            observed,
            row_basis,
            col_basis,
        })
    }
}

/// Fits one method and scores it. Test entries are the complement of the
/// sampled set; with a full mask the validation entries are used instead.
fn fit_point(
    cfg: &SyntheticConfig,
    instance: &SyntheticInstance,
    method: Method,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    let mut fit_cfg = method_fit_config(method, &cfg.fit, &cfg.overrides);
    fit_cfg.k = cfg.k;
    fit_cfg.seed = derive_seed(seed, STREAM_SPLIT);
    let obs = MaskedMatrix::observe(&instance.truth, instance.observed.clone())?;
    let split = split_observed(&instance.observed, fit_cfg.val_ratio, fit_cfg.seed)?;
    let result = fit(&obs, &split, instance.row_basis.clone(), instance.col_basis.clone(), &fit_cfg)?;
    let x_hat = result.model.decode();
    let complement = instance.observed.complement();
    let test = if complement.count() > 0 { complement } else { split.val.clone() };
    if !test.is_disjoint(&split.train) {
        return Err(Error::Validation("test entries overlap the training entries".into()));
    }
    Ok((
        rmse(&x_hat, &instance.truth, &split.train)?,
        rmse(&x_hat, &instance.truth, &test)?,
        result.iterations_run,
    ))
}

#[derive(Debug, Clone, Copy)]
struct Point {
    param: f64,
    rank: usize,
    density: f64,
    noise: f64,
}

fn run_sweep(protocol: &str, cfg: &SyntheticConfig, points: Vec<Point>, reference: Vec<ReferencePoint>) -> Result<ExperimentReport> {
    if cfg.seeds.is_empty() || cfg.methods.is_empty() {
        return Err(Error::Argument("a sweep needs at least one seed and one method".into()));
    }
    if let Some(m) = cfg.methods.iter().find(|m| !m.is_spectral()) {
        return Err(Error::Argument(format!("method '{m}' is only available for rating data")));
    }
    let mut jobs = Vec::new();
    for &point in &points {
        for &seed in &cfg.seeds {
            jobs.push((point, seed));
        }
    }
    let per_job = run_parallel(jobs, |(point, seed)| {
        let instance = SyntheticInstance::generate(cfg, point.rank, point.density, point.noise, seed)?;
        cfg.methods
            .iter()
            .map(|&method| {
                let clock = Stopwatch::start(cfg.record_timing);
                let (train_rmse, test_rmse, iters) = fit_point(cfg, &instance, method, seed)?;
                Ok(Record {
                    protocol: protocol.to_string(),
                    param: point.param,
                    method,
                    seed,
                    train_rmse,
                    test_rmse,
                    iters,
                    seconds: clock.seconds(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut report = ExperimentReport::new(protocol, serde_json::to_value(cfg)?);
    report.records = per_job.into_iter().flatten().collect();
    report.reference = reference;
    Ok(report)
}

fn references(rows: &[(f64, [f64; 3])]) -> Vec<ReferencePoint> {
    rows.iter()
        .flat_map(|&(param, values)| {
            [Method::Ours, Method::OursFm, Method::Sgmc]
                .into_iter()
                .zip(values)
                .map(move |(method, test_rmse)| ReferencePoint { param, method, test_rmse })
        })
        .collect()
}

/// Test RMSE against the rank of the synthesized matrix.
pub fn run_rank_sweep(cfg: &SyntheticConfig) -> Result<ExperimentReport> {
    let points = cfg
        .ranks
        .iter()
        .map(|&rank| Point {
            param: rank as f64,
            rank,
            density: cfg.density,
            noise: 0.0,
        })
        .collect();
    let reference = references(&[
        (5.0, [1e-7, 2e-5, 1e-4]),
        (10.0, [2e-7, 2e-5, 2e-4]),
        (12.0, [5e-7, 4e-5, 9e-4]),
        (15.0, [6e-3, 1e-3, 1e-2]),
        (20.0, [3e-2, 1e-2, 5e-2]),
    ]);
    run_sweep("rank", cfg, points, reference)
}

/// Test RMSE against the fraction of sampled entries.
pub fn run_density_sweep(cfg: &SyntheticConfig) -> Result<ExperimentReport> {
    let points = cfg
        .densities
        .iter()
        .map(|&density| Point {
            param: density,
            rank: cfg.rank,
            density,
            noise: 0.0,
        })
        .collect();
    let reference = references(&[
        (0.01, [2e-2, 2e-2, 1e-1]),
        (0.05, [8e-7, 1e-3, 5e-4]),
        (0.10, [2e-7, 5e-5, 2e-4]),
        (0.20, [1e-7, 2e-5, 1e-4]),
    ]);
    run_sweep("density", cfg, points, reference)
}

/// Test RMSE against the standard deviation of the graph noise. The truth
/// and the mask are shared across levels; only the fitting bases change.
pub fn run_noise_sweep(cfg: &SyntheticConfig) -> Result<ExperimentReport> {
    if let Some(&bad) = cfg.noise_levels.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::Argument(format!("noise level {bad} must be >= 0")));
    }
    let points = cfg
        .noise_levels
        .iter()
        .map(|&noise| Point {
            param: noise,
            rank: cfg.rank,
            density: cfg.density,
            noise,
        })
        .collect();
    let reference = references(&[
        (0.05, [1e-3, 2e-3, 5e-3]),
        (0.10, [4e-3, 3e-3, 1e-2]),
        (0.20, [6e-3, 6e-3, 1e-2]),
    ]);
    run_sweep("noise", cfg, points, reference)
}
