//! Initialization, train/validation splitting and the gradient-descent fit.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcmap::{encode, FunctionalModel};
use crate::graph::SpectralBasis;
use crate::objective::{
    EnergyBreakdown, EntryPredictor, Gradients, Mask, MaskedMatrix, Objective, Observations, RegTarget, SgmcWeights,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Full-batch gradient descent with a fixed step.
    #[default]
    #[serde(rename = "plain")]
    PlainGd,
    /// Adam-style adaptive moment estimates.
    #[serde(rename = "adaptive")]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "gd" => Ok(OptimizerKind::PlainGd),
            "adaptive" | "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Argument(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Which energy the fit minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Commutativity-regularized objective.
    #[default]
    None,
    /// Dirichlet + off-diagonal SGMC regularizers.
    Sgmc,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Baseline::None),
            "sgmc" => Ok(Baseline::Sgmc),
            other => Err(Error::Argument(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Hyperparameters of a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub mu: f64,
    pub learning_rate: f64,
    /// `None` picks 200 000 for plain GD and 20 000 for Adam.
    pub max_iters: Option<usize>,
    /// Iterations without relative validation improvement of at least
    /// `min_improvement` before stopping.
    pub patience: usize,
    pub min_improvement: f64,
    pub grad_tol: f64,
    /// Fraction of observed entries held out for validation. Zero disables
    /// validation; checkpoints are then chosen by training energy.
    pub val_ratio: f64,
    pub k: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub reg_target: RegTarget,
    pub baseline: Baseline,
    pub sgmc: SgmcWeights,
    /// When false, `P` and `Q` stay at the identity and only `C` is trained.
    pub train_transforms: bool,
    pub adam: AdamParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mu: 1e-5,
            learning_rate: 1e-6,
            max_iters: None,
            patience: 5_000,
            min_improvement: 1e-6,
            grad_tol: 1e-12,
            val_ratio: 0.05,
            k: 30,
            seed: 0,
            optimizer: OptimizerKind::PlainGd,
            reg_target: RegTarget::Effective,
            baseline: Baseline::None,
            sgmc: SgmcWeights::default(),
            train_transforms: true,
            adam: AdamParams::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.val_ratio) {
            return Err(Error::Argument(format!("val_ratio {} outside [0, 1)", self.val_ratio)));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Argument(format!("mu {} must be >= 0", self.mu)));
        }
        if self.k == 0 {
            return Err(Error::Argument("basis size k must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_max_iters(&self) -> usize {
        self.max_iters.unwrap_or(match self.optimizer {
            OptimizerKind::PlainGd => 200_000,
            OptimizerKind::Adam => 20_000,
        })
    }

    pub fn objective(&self) -> Objective {
        match self.baseline {
            Baseline::None => Objective::Commutativity {
                mu: self.mu,
                target: self.reg_target,
            },
            Baseline::Sgmc => Objective::Sgmc(self.sgmc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    Patience,
    GradientNorm,
}

/// Energies and validation error of the iterate at the start of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub total: f64,
    pub data: f64,
    pub reg: f64,
    /// NaN when validation is disabled.
    pub val_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters with the best validation RMSE seen.
    pub model: FunctionalModel,
    pub history: Vec<HistoryEntry>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    /// Iteration index of the returned parameters (`iterations_run` means
    /// the final iterate).
    pub best_iteration: usize,
    pub best_val_rmse: f64,
}

/// Disjoint training and validation masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Mask,
    pub val: Mask,
}

/// Randomly moves `round(val_ratio * |S|)` observed entries to a validation
/// mask.
pub fn split_observed(mask: &Mask, val_ratio: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&val_ratio) {
        return Err(Error::Argument(format!("val_ratio {val_ratio} outside [0, 1)")));
    }
    let (rows, cols) = mask.shape();
    let mut observed = mask.indices();
    let total = observed.len();
    let n_val = (val_ratio * total as f64).round() as usize;
    if val_ratio > 0.0 && (n_val == 0 || n_val == total) {
        return Err(Error::Argument(format!(
            "{total} observed entries cannot be split with ratio {val_ratio}"
        )));
    }
    observed.shuffle(&mut rng::seeded(seed));
    let val = Mask::from_indices(rows, cols, observed[..n_val].iter().copied())?;
    let train = Mask::from_indices(rows, cols, observed[n_val..].iter().copied())?;
    Ok(Split { train, val })
}

/// `P = Q = I`, `C = Phi^T (M . S) Psi`.
pub fn init_model(
    obs: &MaskedMatrix,
    row_basis: Arc<SpectralBasis>,
    col_basis: Arc<SpectralBasis>,
) -> Result<FunctionalModel> {
    let c = encode(obs.values(), row_basis.vectors(), col_basis.vectors())?;
    FunctionalModel::with_identity_transforms(c, row_basis, col_basis)
}

/// RMSE of the model over the given entries (NaN when there are none).
pub fn observed_rmse(model: &FunctionalModel, obs: &Observations) -> f64 {
    rmse_with(&EntryPredictor::new(model), obs)
}

fn rmse_with(predictor: &EntryPredictor, obs: &Observations) -> f64 {
    if obs.is_empty() {
        return f64::NAN;
    }
    let sq: f64 = obs
        .entries()
        .iter()
        .map(|&(i, j, v)| (predictor.predict(i, j) - v).powi(2))
        .sum();
    (sq / obs.len() as f64).sqrt()
}

#[derive(Debug, Clone)]
struct Moments {
    m: [DMatrix<f64>; 3],
    v: [DMatrix<f64>; 3],
    t: i32,
}

/// Stateful optimizer over one model; exposes single steps for inspection.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: FunctionalModel,
    objective: Objective,
    train: Observations,
    kind: OptimizerKind,
    learning_rate: f64,
    adam: AdamParams,
    train_transforms: bool,
    moments: Option<Moments>,
}

impl Trainer {
    pub fn new(model: FunctionalModel, train: Observations, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        if model.shape() != train.shape() {
            return Err(Error::Shape(format!(
                "model decodes to {:?}, observations are {:?}",
                model.shape(),
                train.shape()
            )));
        }
        Ok(Trainer {
            model,
            objective: config.objective(),
            train,
            kind: config.optimizer,
            learning_rate: config.learning_rate,
            adam: config.adam,
            train_transforms: config.train_transforms,
            moments: None,
        })
    }

    pub fn model(&self) -> &FunctionalModel {
        &self.model
    }

    pub fn into_model(self) -> FunctionalModel {
        self.model
    }

    /// Energy and gradients at the current iterate. Gradients of frozen
    /// transforms are zeroed.
    pub fn evaluate(&self) -> Result<(EnergyBreakdown, Gradients)> {
        let (e, mut g) = self.objective.energy_and_gradients(&self.model, &self.train)?;
        if !self.train_transforms {
            g.p.fill(0.0);
            g.q.fill(0.0);
        }
        Ok((e, g))
    }

    /// [`Trainer::evaluate`] plus the RMSE of the current iterate on `val`.
    fn evaluate_scored(&self, val: &Observations) -> Result<(EnergyBreakdown, Gradients, f64)> {
        let predictor = EntryPredictor::new(&self.model);
        let (e, mut g) = self.objective.energy_and_gradients_with(&self.model, &predictor, &self.train)?;
        if !self.train_transforms {
            g.p.fill(0.0);
            g.q.fill(0.0);
        }
        Ok((e, g, rmse_with(&predictor, val)))
    }

    /// Applies one update with precomputed gradients.
    pub fn apply(&mut self, grads: &Gradients) {
        let lr = self.learning_rate;
        let train_transforms = self.train_transforms;
        let (c, p, q) = self.model.parts_mut();
        let params = [c, p, q];
        let gs = [&grads.c, &grads.p, &grads.q];
        match self.kind {
            OptimizerKind::PlainGd => {
                for (idx, (param, g)) in params.into_iter().zip(gs).enumerate() {
                    if idx == 0 || train_transforms {
                        param.zip_apply(g, |x, gi| *x -= gi * lr);
                    }
                }
            }
            OptimizerKind::Adam => {
                let k = grads.c.nrows();
                let AdamParams { beta1, beta2, eps } = self.adam;
                let st = self.moments.get_or_insert_with(|| Moments {
                    m: std::array::from_fn(|_| DMatrix::zeros(k, k)),
                    v: std::array::from_fn(|_| DMatrix::zeros(k, k)),
                    t: 0,
                });
                st.t += 1;
                let c1 = 1.0 - beta1.powi(st.t);
                let c2 = 1.0 - beta2.powi(st.t);
                for (idx, (param, g)) in params.into_iter().zip(gs).enumerate() {
                    if idx > 0 && !train_transforms {
                        continue;
                    }
                    let (m, v) = (&mut st.m[idx], &mut st.v[idx]);
                    for ((x, &gi), (mi, vi)) in param.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
    }

    /// One full iteration: gradient at the current iterate, then update.
    pub fn step(&mut self) -> Result<EnergyBreakdown> {
        let (e, g) = self.evaluate()?;
        self.apply(&g);
        Ok(e)
    }
}

/// Fits a model on `split.train` and selects the iterate with the lowest
/// RMSE on `split.val`.
pub fn fit(
    obs: &MaskedMatrix,
    split: &Split,
    row_basis: Arc<SpectralBasis>,
    col_basis: Arc<SpectralBasis>,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    if row_basis.k() != config.k || col_basis.k() != config.k {
        return Err(Error::Argument(format!(
            "bases have {} and {} vectors, config asks for k = {}",
            row_basis.k(),
            col_basis.k(),
            config.k
        )));
    }
    let train_obs = obs.restrict(&split.train)?;
    let val_obs = Observations::new(&obs.restrict(&split.val)?);
    let train = Observations::new(&train_obs);
    let model = init_model(&train_obs, row_basis, col_basis)?;
    let mut trainer = Trainer::new(model, train, config)?;

    let max_iters = config.resolved_max_iters();
    let use_val = !val_obs.is_empty();
    let mut history = Vec::with_capacity(max_iters.min(1 << 16));
    let mut best_score = f64::INFINITY;
    let mut best_model = trainer.model().clone();
    let mut best_iteration = 0;
    let mut reference = f64::INFINITY;
    let mut stalled = 0;
    let mut stop_reason = StopReason::MaxIters;

    let mut consider = |score: f64, model: &FunctionalModel, iteration: usize| {
        if score < best_score {
            best_score = score;
            best_model = model.clone();
            best_iteration = iteration;
        }
    };

    for iteration in 0..max_iters {
        let (energy, grads, val_rmse) = trainer.evaluate_scored(&val_obs)?;
        if !energy.total.is_finite() {
            return Err(Error::Diverged {
                iteration,
                learning_rate: config.learning_rate,
                value: energy.total,
            });
        }
        history.push(HistoryEntry {
            total: energy.total,
            data: energy.data,
            reg: energy.reg,
            val_rmse,
        });
        let score = if use_val { val_rmse } else { energy.total };
        consider(score, trainer.model(), iteration);

        if score < reference * (1.0 - config.min_improvement) {
            reference = score;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= config.patience {
                stop_reason = StopReason::Patience;
                break;
            }
        }
        if grads.norm() <= config.grad_tol {
            stop_reason = StopReason::GradientNorm;
            break;
        }
        trainer.apply(&grads);
    }

    let iterations_run = history.len();
    if stop_reason == StopReason::MaxIters {
        // The last update has not been scored yet.
        let final_score = if use_val {
            observed_rmse(trainer.model(), &val_obs)
        } else {
            trainer.evaluate()?.0.total
        };
        if !final_score.is_finite() {
            return Err(Error::Diverged {
                iteration: iterations_run,
                learning_rate: config.learning_rate,
                value: final_score,
            });
        }
        consider(final_score, trainer.model(), iterations_run);
    }

    Ok(FitResult {
        model: best_model,
        history,
        iterations_run,
        stop_reason,
        best_iteration,
        best_val_rmse: if use_val { best_score } else { f64::NAN },
    })
}

/// Splits `obs` with the configured ratio and seed, then fits.
pub fn fit_observed(
    obs: &MaskedMatrix,
    row_basis: Arc<SpectralBasis>,
    col_basis: Arc<SpectralBasis>,
    config: &FitConfig,
) -> Result<FitResult> {
    let split = split_observed(obs.mask(), config.val_ratio, config.seed)?;
    fit(obs, &split, row_basis, col_basis, config)
}

#[cfg(test)]
mod tests;
