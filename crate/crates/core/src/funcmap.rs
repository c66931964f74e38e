//! Spectral coefficient representation of matrices on a product of graphs.
//!
//! A matrix `X` living on `rows x cols` is described by the `k x k`
//! coefficient matrix `C = Phi^T X Psi` in the truncated Laplacian bases of
//! the row and column graphs. The trainable model carries two extra `k x k`
//! transforms and decodes as `X = Phi P C Q^T Psi^T`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::SpectralBasis;
use crate::linalg;
use crate::rng;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-9;

/// Coefficients `C = Phi^T X Psi`.
pub fn encode(x: &DMatrix<f64>, phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != phi.nrows() || x.ncols() != psi.nrows() {
        return Err(Error::Shape(format!(
            "cannot encode {}x{} matrix with bases of {} and {} rows",
            x.nrows(),
            x.ncols(),
            phi.nrows(),
            psi.nrows()
        )));
    }
    Ok(phi.tr_mul(x) * psi)
}

/// `Phi B Psi^T` for an arbitrary coefficient block `B`.
pub fn synthesize(coeffs: &DMatrix<f64>, phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> DMatrix<f64> {
    (phi * coeffs) * psi.transpose()
}

/// Orthogonal projection of `x` onto `span(Phi) (x) span(Psi)`.
pub fn project(x: &DMatrix<f64>, phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(synthesize(&encode(x, phi, psi)?, phi, psi))
}

/// Trainable functional-map model `(C, P, Q)` over fixed row/column bases.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalModel {
    c: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    row_basis: Arc<SpectralBasis>,
    col_basis: Arc<SpectralBasis>,
}

impl FunctionalModel {
    pub fn new(
        c: DMatrix<f64>,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        row_basis: Arc<SpectralBasis>,
        col_basis: Arc<SpectralBasis>,
    ) -> Result<Self> {
        let k = row_basis.k();
        if col_basis.k() != k {
            return Err(Error::Shape(format!(
                "row basis has {k} vectors, column basis {}",
                col_basis.k()
            )));
        }
        for (name, m) in [("C", &c), ("P", &p), ("Q", &q)] {
            if m.shape() != (k, k) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {k}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(FunctionalModel {
            c,
            p,
            q,
            row_basis,
            col_basis,
        })
    }

    /// Model with `P = Q = I`.
    pub fn with_identity_transforms(
        c: DMatrix<f64>,
        row_basis: Arc<SpectralBasis>,
        col_basis: Arc<SpectralBasis>,
    ) -> Result<Self> {
        let k = row_basis.k();
        Self::new(c, DMatrix::identity(k, k), DMatrix::identity(k, k), row_basis, col_basis)
    }

    pub fn k(&self) -> usize {
        self.c.nrows()
    }

    /// Output shape `(m, n)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.row_basis.n(), self.col_basis.n())
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut DMatrix<f64>, &mut DMatrix<f64>, &mut DMatrix<f64>) {
        (&mut self.c, &mut self.p, &mut self.q)
    }

    pub fn row_basis(&self) -> &SpectralBasis {
        &self.row_basis
    }

    pub fn col_basis(&self) -> &SpectralBasis {
        &self.col_basis
    }

    /// The coefficient block actually applied to the bases, `P C Q^T`.
    pub fn effective_map(&self) -> DMatrix<f64> {
        &self.p * &self.c * self.q.transpose()
    }

    /// Dense reconstruction `Phi P C Q^T Psi^T`.
    pub fn decode(&self) -> DMatrix<f64> {
        synthesize(
            &self.effective_map(),
            self.row_basis.vectors(),
            self.col_basis.vectors(),
        )
    }
}

/// Free-function form of [`FunctionalModel::decode`].
pub fn decode(model: &FunctionalModel) -> DMatrix<f64> {
    model.decode()
}

/// Random rank-`rank` matrix band-limited to the two bases.
///
/// The coefficient block is `A B^T` with `A, B` drawn `k x rank` i.i.d.
/// standard normal; the result is rescaled so the root-mean-square of its
/// entries equals `target_scale`.
pub fn synthesize_bandlimited(
    row_basis: &SpectralBasis,
    col_basis: &SpectralBasis,
    rank: usize,
    seed: u64,
    target_scale: f64,
) -> Result<DMatrix<f64>> {
    let k = row_basis.k().min(col_basis.k());
    if rank > k {
        return Err(Error::Argument(format!("rank {rank} exceeds basis size {k}")));
    }
    let (m, n) = (row_basis.n(), col_basis.n());
    if rank == 0 {
        return Ok(DMatrix::zeros(m, n));
    }
    let mut rng = rng::seeded(seed);
    let mut draw = |rows: usize| {
        DMatrix::from_fn(rows, rank, |_, _| StandardNormal.sample(&mut rng))
    };
    let a: DMatrix<f64> = draw(row_basis.k());
    let b: DMatrix<f64> = draw(col_basis.k());
    let coeffs = a * b.transpose();
    let mut x = synthesize(&coeffs, row_basis.vectors(), col_basis.vectors());
    let rms = x.norm() / ((m * n) as f64).sqrt();
    if rms > 0.0 {
        x *= target_scale / rms;
    }
    Ok(x)
}

/// Singular values in descending order with matching `U`, `V` columns.
pub(crate) fn sorted_svd(x: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let d = linalg::svd(x)?;
    Ok((d.sigma, d.u, d.v))
}

/// Numerical rank: singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(x: &DMatrix<f64>) -> Result<usize> {
    let (sigma, _, _) = sorted_svd(x)?;
    let top = sigma.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sigma.iter().filter(|&&s| s > RANK_TOL * top).count())
}

/// How far the leading singular subspaces of `m` stick out of the bases:
/// `||U_r - Phi Phi^T U_r||_F + ||V_r - Psi Psi^T V_r||_F`.
///
/// Only singular vectors with nonzero singular value take part, so `r` is
/// capped at the numerical rank. When `sigma_r` ties with `sigma_{r+1}` the
/// whole tied cluster is included, which makes the result a function of the
/// invariant subspace rather than of an arbitrary choice of vectors.
pub fn basis_consistency_residual(
    m: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    r: usize,
) -> Result<f64> {
    if m.nrows() != phi.nrows() || m.ncols() != psi.nrows() {
        return Err(Error::Shape(format!(
            "{}x{} matrix against bases with {} and {} rows",
            m.nrows(),
            m.ncols(),
            phi.nrows(),
            psi.nrows()
        )));
    }
    let bound = m.nrows().min(m.ncols()).min(phi.ncols()).min(psi.ncols());
    if r > bound {
        return Err(Error::Argument(format!("rank {r} exceeds min(m, n, k) = {bound}")));
    }
    if r == 0 {
        return Ok(0.0);
    }
    let (sigma, u, v) = sorted_svd(m)?;
    let top = sigma[0];
    if top == 0.0 {
        return Ok(0.0);
    }
    let nonzero = sigma.iter().filter(|&&s| s > RANK_TOL * top).count();
    let mut r_eff = r.min(nonzero);
    while r_eff > 0 && r_eff < nonzero && sigma[r_eff] >= sigma[r_eff - 1] * (1.0 - 1e-8) {
        r_eff += 1;
    }
    let off_span = |vecs: DMatrix<f64>, basis: &DMatrix<f64>| {
        let inside = basis * basis.tr_mul(&vecs);
        (vecs - inside).norm()
    };
    let ur = u.columns(0, r_eff).into_owned();
    let vr = v.columns(0, r_eff).into_owned();
    Ok(off_span(ur, phi) + off_span(vr, psi))
}
