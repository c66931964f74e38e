use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{method_fit_config, MethodOverrides, rmse, run_parallel, ExperimentReport, Method, Record, ReferencePoint, Stopwatch};
use crate::data::{
    load_ml100k_split, rating_graphs, ratings_matrix, read_ratings, ML100K_ITEMS, ML100K_RATINGS, ML100K_USERS,
    RATING_SCALE,
};
use crate::error::{Error, Result};
use crate::graph::spectral_decompose;
use crate::objective::{Mask, MaskedMatrix};
use crate::optimizer::{fit, split_observed, FitConfig, OptimizerKind};
use crate::rng::derive_seed;

/// How rated entries are divided into training and test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Ml100kSplit {
    /// Uniformly random hold-out of `test_ratio` of the ratings.
    Random { test_ratio: f64 },
    /// A bundled `<name>.base` / `<name>.test` pair, e.g. `u1`.
    Canonical { name: String },
}

/// What is subtracted from the training ratings before fitting and added
/// back to the predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    None,
    /// The global training mean.
    Mean,
    /// The global mean plus per-user and per-item offsets ([`RatingBiases`]).
    Biases,
}

impl std::str::FromStr for Centering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Centering::None),
            "mean" => Ok(Centering::Mean),
            "biases" => Ok(Centering::Biases),
            other => Err(Error::Argument(format!("unknown centering '{other}' (none|mean|biases)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ml100kConfig {
    pub dir: PathBuf,
    /// Basis size for both axes.
    pub k: usize,
    /// Neighbours in the rating-similarity graphs.
    pub k_nn: usize,
    pub split: Ml100kSplit,
    pub seed: u64,
    pub centering: Centering,
    /// Shrinkage of the per-user and per-item offsets towards zero.
    pub bias_reg: f64,
    /// Clip predictions to the rating scale.
    pub clamp: bool,
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    pub overrides: MethodOverrides,
    pub record_timing: bool,
}

impl Default for Ml100kConfig {
    fn default() -> Self {
        Ml100kConfig {
            dir: PathBuf::from("data/ml-100k"),
            k: 60,
            k_nn: crate::data::DEFAULT_KNN,
            split: Ml100kSplit::Random { test_ratio: 0.05 },
            seed: 0,
            centering: Centering::Biases,
            bias_reg: 10.0,
            clamp: true,
            methods: vec![Method::Ours, Method::OursFm, Method::GlobalMean, Method::Biases],
            fit: FitConfig {
                k: 60,
                optimizer: OptimizerKind::Adam,
                learning_rate: 1e-2,
                max_iters: Some(2000),
                ..FitConfig::default()
            },
            overrides: MethodOverrides::new(),
            record_timing: false,
        }
    }
}

const STREAM_TEST_SPLIT: u64 = 11;
const STREAM_VAL_SPLIT: u64 = 12;

fn random_holdout(observed: &Mask, test_ratio: f64, seed: u64) -> Result<(Mask, Mask)> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::Argument(format!("test_ratio {test_ratio} outside (0, 1)")));
    }
    let split = split_observed(observed, test_ratio, seed)?;
    Ok((split.train, split.val))
}

/// Ratings modelled as `mean + user[i] + item[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingBiases {
    pub mean: f64,
    pub user: DVector<f64>,
    pub item: DVector<f64>,
}

const BIAS_SWEEPS: usize = 25;

impl RatingBiases {
    /// Constant model at the mean of the observed entries.
    pub fn mean_only(obs: &MaskedMatrix) -> Result<Self> {
        let entries = obs.entries();
        if entries.is_empty() {
            return Err(Error::Argument("no observed ratings".into()));
        }
        let (m, n) = obs.shape();
        let mean = entries.iter().map(|e| e.2).sum::<f64>() / entries.len() as f64;
        Ok(RatingBiases {
            mean,
            user: DVector::zeros(m),
            item: DVector::zeros(n),
        })
    }

    /// Ridge-regularized offsets by alternating exact updates:
    /// `user[i] = sum_j (r_ij - mean - item[j]) / (reg + n_i)` and the
    /// symmetric update for items.
    pub fn fit(obs: &MaskedMatrix, reg: f64) -> Result<Self> {
        if !(reg >= 0.0) {
            return Err(Error::Argument(format!("bias regularization {reg} must be >= 0")));
        }
        let mut b = Self::mean_only(obs)?;
        let entries = obs.entries();
        let (m, n) = obs.shape();
        let mut num_u = DVector::zeros(m);
        let mut cnt_u = DVector::<f64>::zeros(m);
        let mut num_i = DVector::zeros(n);
        let mut cnt_i = DVector::<f64>::zeros(n);
        for &(i, j, _) in &entries {
            cnt_u[i] += 1.0;
            cnt_i[j] += 1.0;
        }
        for _ in 0..BIAS_SWEEPS {
            num_u.fill(0.0);
            for &(i, j, r) in &entries {
                num_u[i] += r - b.mean - b.item[j];
            }
            b.user = num_u.zip_map(&cnt_u, |s, c| if c + reg > 0.0 { s / (c + reg) } else { 0.0 });
            num_i.fill(0.0);
            for &(i, j, r) in &entries {
                num_i[j] += r - b.mean - b.user[i];
            }
            b.item = num_i.zip_map(&cnt_i, |s, c| if c + reg > 0.0 { s / (c + reg) } else { 0.0 });
        }
        Ok(b)
    }

    pub fn predict(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.user.len(), self.item.len(), |i, j| self.mean + self.user[i] + self.item[j])
    }
}

fn to_rating_scale(x: &DMatrix<f64>, offsets: &DMatrix<f64>, clamp: bool) -> DMatrix<f64> {
    let (lo, hi) = RATING_SCALE;
    x.zip_map(offsets, |v, o| {
        let p = v + o;
        if clamp {
            p.clamp(lo, hi)
        } else {
            p
        }
    })
}

/// Fits on a training part of the MovieLens-100K ratings and reports RMSE on
/// held-out ratings. Similarity graphs are built from training ratings only.
pub fn run_ml100k(cfg: &Ml100kConfig) -> Result<ExperimentReport> {
    let ratings = read_ratings(cfg.dir.join(ML100K_RATINGS), ML100K_USERS, ML100K_ITEMS)?;
    let all = ratings_matrix(&ratings, ML100K_USERS, ML100K_ITEMS)?;
    let (train_mask, test_mask) = match &cfg.split {
        Ml100kSplit::Random { test_ratio } => {
            random_holdout(all.mask(), *test_ratio, derive_seed(cfg.seed, STREAM_TEST_SPLIT))?
        }
        Ml100kSplit::Canonical { name } => {
            let (train, test) = load_ml100k_split(&cfg.dir, name)?;
            if !train.union(&test)?.is_subset_of(all.mask()) {
                return Err(Error::Validation(format!("{name} split contains ratings missing from {ML100K_RATINGS}")));
            }
            (train, test)
        }
    };
    if !train_mask.is_disjoint(&test_mask) {
        return Err(Error::Validation("train and test ratings overlap".into()));
    }
    let train = all.restrict(&train_mask)?;
    let truth = all.values();
    let global = RatingBiases::mean_only(&train)?;
    let biases = RatingBiases::fit(&train, cfg.bias_reg)?;
    let offsets = match cfg.centering {
        Centering::None => DMatrix::zeros(ML100K_USERS, ML100K_ITEMS),
        Centering::Mean => global.predict(),
        Centering::Biases => biases.predict(),
    };

    let (user_graph, item_graph) = rating_graphs(&train, cfg.k_nn)?;
    let row_basis = Arc::new(spectral_decompose(&user_graph.laplacian(), cfg.k)?);
    let col_basis = Arc::new(spectral_decompose(&item_graph.laplacian(), cfg.k)?);
    let centered = MaskedMatrix::new(
        (train.values() - &offsets).component_mul(train_mask.as_matrix()),
        train_mask.clone(),
    )?;

    let split_seed = derive_seed(cfg.seed, STREAM_VAL_SPLIT);
    let per_method = run_parallel(cfg.methods.clone(), |method| {
        let clock = Stopwatch::start(cfg.record_timing);
        let (x_hat, fit_mask, iters) = match method {
            Method::GlobalMean => (global.predict(), train_mask.clone(), 0),
            Method::Biases => {
                let zero = DMatrix::zeros(ML100K_USERS, ML100K_ITEMS);
                (to_rating_scale(&zero, &biases.predict(), cfg.clamp), train_mask.clone(), 0)
            }
            _ => {
                let mut fit_cfg = method_fit_config(method, &cfg.fit, &cfg.overrides);
                fit_cfg.k = cfg.k;
                fit_cfg.seed = split_seed;
                let split = split_observed(&train_mask, fit_cfg.val_ratio, split_seed)?;
                let result = fit(&centered, &split, row_basis.clone(), col_basis.clone(), &fit_cfg)?;
                (to_rating_scale(&result.model.decode(), &offsets, cfg.clamp), split.train, result.iterations_run)
            }
        };
        Ok(Record {
            protocol: "ml100k".into(),
            param: cfg.k as f64,
            method,
            seed: cfg.seed,
            train_rmse: rmse(&x_hat, truth, &fit_mask)?,
            test_rmse: rmse(&x_hat, truth, &test_mask)?,
            iters,
            seconds: clock.seconds(),
        })
    })?;

    let mut report = ExperimentReport::new("ml100k", serde_json::to_value(cfg)?);
    report.records = per_method;
    report.reference = [(Method::Ours, 0.915), (Method::OursFm, 1.12), (Method::Sgmc, 0.912)]
        .into_iter()
        .map(|(method, test_rmse)| ReferencePoint {
            param: cfg.k as f64,
            method,
            test_rmse,
        })
        .collect();
    Ok(report)
}
