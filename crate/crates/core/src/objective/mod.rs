//! Completion energies and their analytic gradients.
//!
//! The main objective is the masked data term plus a Laplacian
//! commutativity penalty on the coefficient map:
//!
//! ```text
//! E(C, P, Q) = ||(X - M) . S||_F^2 + mu ||B Lr - Lc B||_F^2,
//! X = Phi B Psi^T,  B = P C Q^T
//! ```
//!
//! The SGMC-style baseline replaces the penalty by row/column Dirichlet
//! energies plus off-diagonal penalties on the transforms `P`, `Q`.
//!
//! Training evaluations only touch observed entries, so their cost scales
//! with the number of ratings rather than with `m * n`.

mod masked;
mod terms;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcmap::FunctionalModel;

pub use masked::{Mask, MaskedMatrix};
pub use terms::{commutativity_energy, dirichlet_cols, dirichlet_rows, offdiag_penalty};

/// Which coefficient block the commutativity penalty acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegTarget {
    /// The effective map `P C Q^T`.
    #[default]
    Effective,
    /// The raw coefficient matrix `C`.
    Raw,
}

impl std::str::FromStr for RegTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(RegTarget::Effective),
            "raw" => Ok(RegTarget::Raw),
            other => Err(Error::Argument(format!("unknown regularization target '{other}'"))),
        }
    }
}

/// Weights of the four SGMC regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgmcWeights {
    pub dirichlet_rows: f64,
    pub dirichlet_cols: f64,
    pub diag_rows: f64,
    pub diag_cols: f64,
}

impl Default for SgmcWeights {
    fn default() -> Self {
        SgmcWeights {
            dirichlet_rows: 1e-4,
            dirichlet_cols: 1e-4,
            diag_rows: 1e-6,
            diag_cols: 1e-6,
        }
    }
}

/// An energy to minimize over `(C, P, Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Data term plus `mu` times the commutativity penalty.
    Commutativity { mu: f64, target: RegTarget },
    /// Data term plus the weighted SGMC regularizers (reported with `mu = 1`).
    Sgmc(SgmcWeights),
}

/// Value of an objective split into its parts; `total = data + mu * reg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub data: f64,
    pub reg: f64,
    pub total: f64,
    pub mu: f64,
}

impl EnergyBreakdown {
    fn new(data: f64, reg: f64, mu: f64) -> Self {
        EnergyBreakdown {
            data,
            reg,
            total: data + mu * reg,
            mu,
        }
    }
}

/// Partial derivatives with respect to `C`, `P` and `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub c: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        (self.c.norm_squared() + self.p.norm_squared() + self.q.norm_squared()).sqrt()
    }
}

/// Observed entries in a form suited to repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    shape: (usize, usize),
    entries: Vec<(usize, usize, f64)>,
}

impl Observations {
    pub fn new(obs: &MaskedMatrix) -> Self {
        Observations {
            shape: obs.shape(),
            entries: obs.entries(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

/// Row-major-friendly transposed factors for evaluating single entries of
/// `Phi B Psi^T`.
pub(crate) struct EntryPredictor {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl EntryPredictor {
    pub(crate) fn new(model: &FunctionalModel) -> Self {
        let b = model.effective_map();
        // left = (Phi B)^T (k x m), right = Psi^T (k x n)
        let left = b.tr_mul(&model.row_basis().vectors().transpose());
        let right = model.col_basis().vectors().transpose();
        EntryPredictor { left, right }
    }

    pub(crate) fn predict(&self, i: usize, j: usize) -> f64 {
        self.left.column(i).dot(&self.right.column(j))
    }
}

fn check_shape(model: &FunctionalModel, shape: (usize, usize)) -> Result<()> {
    if model.shape() != shape {
        return Err(Error::Shape(format!(
            "model decodes to {:?} but observations are {:?}",
            model.shape(),
            shape
        )));
    }
    Ok(())
}

/// Data term and, optionally, `D = 2 Phi^T R Psi` with `R = (X - M) . S`.
fn data_part(
    model: &FunctionalModel,
    predictor: &EntryPredictor,
    obs: &Observations,
    with_grad: bool,
) -> (f64, Option<DMatrix<f64>>) {
    let (k, m) = (model.k(), model.shape().0);
    let mut acc = 0.0;
    let mut r_psi_t = with_grad.then(|| DMatrix::<f64>::zeros(k, m));
    for &(i, j, value) in &obs.entries {
        let r = predictor.predict(i, j) - value;
        acc += r * r;
        if let Some(v) = r_psi_t.as_mut() {
            v.column_mut(i).axpy(r, &predictor.right.column(j), 1.0);
        }
    }
    let d = r_psi_t.map(|v| (model.row_basis().vectors().tr_mul(&v.transpose())) * 2.0);
    (acc, d)
}

impl Objective {
    pub fn mu(&self) -> f64 {
        match self {
            Objective::Commutativity { mu, .. } => *mu,
            Objective::Sgmc(_) => 1.0,
        }
    }

    pub fn energy(&self, model: &FunctionalModel, obs: &Observations) -> Result<EnergyBreakdown> {
        check_shape(model, obs.shape)?;
        Ok(self.evaluate(model, obs, false).0)
    }

    pub fn gradients(&self, model: &FunctionalModel, obs: &Observations) -> Result<Gradients> {
        check_shape(model, obs.shape)?;
        Ok(self.evaluate(model, obs, true).1.expect("gradient requested"))
    }

    /// Energy and gradients in one pass.
    pub fn energy_and_gradients(
        &self,
        model: &FunctionalModel,
        obs: &Observations,
    ) -> Result<(EnergyBreakdown, Gradients)> {
        check_shape(model, obs.shape)?;
        let (e, g) = self.evaluate(model, obs, true);
        Ok((e, g.expect("gradient requested")))
    }

    fn evaluate(&self, model: &FunctionalModel, obs: &Observations, with_grad: bool) -> (EnergyBreakdown, Option<Gradients>) {
        self.evaluate_with(model, &EntryPredictor::new(model), obs, with_grad)
    }

    /// Energy and gradients reusing a predictor built from `model`.
    pub(crate) fn energy_and_gradients_with(
        &self,
        model: &FunctionalModel,
        predictor: &EntryPredictor,
        obs: &Observations,
    ) -> Result<(EnergyBreakdown, Gradients)> {
        check_shape(model, obs.shape)?;
        let (e, g) = self.evaluate_with(model, predictor, obs, true);
        Ok((e, g.expect("gradient requested")))
    }

    fn evaluate_with(
        &self,
        model: &FunctionalModel,
        predictor: &EntryPredictor,
        obs: &Observations,
        with_grad: bool,
    ) -> (EnergyBreakdown, Option<Gradients>) {
        let (data, d) = data_part(model, predictor, obs, with_grad);
        let rows = model.row_basis().values();
        let cols = model.col_basis().values();
        let (c, p, q) = (model.c(), model.p(), model.q());
        match *self {
            Objective::Commutativity { mu, target } => {
                let reg_on = match target {
                    RegTarget::Effective => model.effective_map(),
                    RegTarget::Raw => c.clone(),
                };
                let f = terms::commutator(&reg_on, rows, cols);
                let energy = EnergyBreakdown::new(data, f.norm_squared(), mu);
                let grads = d.map(|d| {
                    let reg_grad = terms::commutator_gradient(&f, rows, cols) * mu;
                    match target {
                        RegTarget::Effective => {
                            let g = d + reg_grad;
                            Gradients {
                                c: p.tr_mul(&g) * q,
                                p: &g * q * c.transpose(),
                                q: g.tr_mul(p) * c,
                            }
                        }
                        RegTarget::Raw => Gradients {
                            c: p.tr_mul(&d) * q + reg_grad,
                            p: &d * q * c.transpose(),
                            q: d.tr_mul(p) * c,
                        },
                    }
                });
                (energy, grads)
            }
            Objective::Sgmc(w) => {
                let b = model.effective_map();
                // With X = Phi B Psi^T and exact eigenvectors,
                // tr(X^T Lr X) = sum_ij rows_i b_ij^2 and
                // tr(X Lc X^T) = sum_ij cols_j b_ij^2.
                let mut dir_rows = 0.0;
                let mut dir_cols = 0.0;
                for j in 0..b.ncols() {
                    for i in 0..b.nrows() {
                        let b2 = b[(i, j)] * b[(i, j)];
                        dir_rows += rows[i] * b2;
                        dir_cols += cols[j] * b2;
                    }
                }
                let off_p = terms::offdiag_penalty(p, rows).expect("validated shapes");
                let off_q = terms::offdiag_penalty(q, cols).expect("validated shapes");
                let reg = w.dirichlet_rows * dir_rows
                    + w.dirichlet_cols * dir_cols
                    + w.diag_rows * off_p
                    + w.diag_cols * off_q;
                let energy = EnergyBreakdown::new(data, reg, 1.0);
                let grads = d.map(|d| {
                    let g = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
                        d[(i, j)] + 2.0 * b[(i, j)] * (w.dirichlet_rows * rows[i] + w.dirichlet_cols * cols[j])
                    });
                    Gradients {
                        c: p.tr_mul(&g) * q,
                        p: &g * q * c.transpose() + terms::offdiag_gradient(p, rows) * w.diag_rows,
                        q: g.tr_mul(p) * c + terms::offdiag_gradient(q, cols) * w.diag_cols,
                    }
                });
                (energy, grads)
            }
        }
    }
}

/// `||(X - M) . S||_F^2` for the model's reconstruction.
pub fn data_term(model: &FunctionalModel, obs: &MaskedMatrix) -> Result<f64> {
    check_shape(model, obs.shape())?;
    Ok(data_part(model, &EntryPredictor::new(model), &Observations::new(obs), false).0)
}

/// Data term plus `mu` times the commutativity penalty on `P C Q^T`.
pub fn total_objective(model: &FunctionalModel, obs: &MaskedMatrix, mu: f64) -> Result<EnergyBreakdown> {
    Objective::Commutativity {
        mu,
        target: RegTarget::Effective,
    }
    .energy(model, &Observations::new(obs))
}

/// Analytic gradients of [`total_objective`].
pub fn gradients(model: &FunctionalModel, obs: &MaskedMatrix, mu: f64) -> Result<Gradients> {
    Objective::Commutativity {
        mu,
        target: RegTarget::Effective,
    }
    .gradients(model, &Observations::new(obs))
}
