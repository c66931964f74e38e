//! Evaluation metric, the synthetic and MovieLens protocols, and report
//! files.

mod report;
mod synthetic;
mod movielens;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Mask;
use crate::optimizer::{Baseline, FitConfig, OptimizerKind};

pub use movielens::{run_ml100k, Centering, Ml100kConfig, Ml100kSplit, RatingBiases};
pub use report::{emit_report, render_report, read_report_csv, read_report_json, ExperimentReport, Record, ReferencePoint, ReportFormat, Summary};
pub use synthetic::{
    run_density_sweep, run_noise_sweep, run_rank_sweep, GraphSpec, SyntheticConfig, SyntheticInstance,
};

/// `sqrt(||(x_hat - truth) . mask||_F^2 / |mask|)`.
pub fn rmse(x_hat: &DMatrix<f64>, truth: &DMatrix<f64>, mask: &Mask) -> Result<f64> {
    if x_hat.shape() != truth.shape() || truth.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?}, truth {:?}, mask {:?}",
            x_hat.shape(),
            truth.shape(),
            mask.shape()
        )));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::Argument("RMSE over an empty mask".into()));
    }
    let sq: f64 = x_hat
        .iter()
        .zip(truth.iter())
        .zip(mask.as_matrix().iter())
        .filter(|(_, &s)| s != 0.0)
        .map(|((a, b), _)| (a - b).powi(2))
        .sum();
    Ok((sq / count as f64).sqrt())
}

/// Compared fitting variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Commutativity-regularized fit of `C`, `P` and `Q`.
    #[serde(rename = "ours")]
    Ours,
    /// Data term only, `P = Q = I` frozen.
    #[serde(rename = "ours-fm")]
    OursFm,
    /// Dirichlet + off-diagonal regularized fit.
    #[serde(rename = "sgmc-baseline")]
    Sgmc,
    /// Constant prediction by the training mean.
    #[serde(rename = "global-mean")]
    GlobalMean,
    /// Training mean plus regularized per-row and per-column offsets.
    #[serde(rename = "user-item-bias")]
    Biases,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::OursFm => "ours-fm",
            Method::Sgmc => "sgmc-baseline",
            Method::GlobalMean => "global-mean",
            Method::Biases => "user-item-bias",
        }
    }

    /// Whether the method fits a spectral model; the others are rating
    /// predictors that ignore the graphs.
    pub fn is_spectral(self) -> bool {
        !matches!(self, Method::GlobalMean | Method::Biases)
    }

    /// The fit configuration this method uses, derived from a shared base.
    pub fn fit_config(self, base: &FitConfig) -> FitConfig {
        let mut cfg = base.clone();
        match self {
            Method::Ours | Method::GlobalMean | Method::Biases => {
                cfg.baseline = Baseline::None;
            }
            Method::OursFm => {
                cfg.baseline = Baseline::None;
                cfg.mu = 0.0;
                cfg.train_transforms = false;
            }
            Method::Sgmc => cfg.baseline = Baseline::Sgmc,
        }
        cfg
    }
}

/// Optimizer settings one method uses instead of the shared ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOverride {
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub max_iters: Option<usize>,
    pub patience: Option<usize>,
}

impl FitOverride {
    pub fn apply(&self, cfg: &mut FitConfig) {
        if let Some(v) = self.optimizer {
            cfg.optimizer = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = Some(v);
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
    }
}

/// Per-method overrides keyed by method.
pub type MethodOverrides = BTreeMap<Method, FitOverride>;

/// `method`'s configuration with its override, if any, applied.
pub fn method_fit_config(method: Method, base: &FitConfig, overrides: &MethodOverrides) -> FitConfig {
    let mut cfg = method.fit_config(base);
    if let Some(o) = overrides.get(&method) {
        o.apply(&mut cfg);
    }
    cfg
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Method::Ours),
            "ours-fm" => Ok(Method::OursFm),
            "sgmc-baseline" | "sgmc" => Ok(Method::Sgmc),
            "global-mean" => Ok(Method::GlobalMean),
            "user-item-bias" => Ok(Method::Biases),
            other => Err(Error::Argument(format!("unknown method '{other}'"))),
        }
    }
}

/// Runs `jobs` on a pool sized by `FGMC_THREADS` (all cores when unset),
/// keeping input order in the output.
pub(crate) fn run_parallel<T, R, F>(jobs: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    let threads = std::env::var("FGMC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    pool.install(|| jobs.into_par_iter().map(f).collect())
}

/// Wall-clock stopwatch that reads zero unless enabled, so reports stay
/// byte-stable by default.
pub(crate) struct Stopwatch(Option<Instant>);

impl Stopwatch {
    pub(crate) fn start(enabled: bool) -> Self {
        Stopwatch(enabled.then(Instant::now))
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64())
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
