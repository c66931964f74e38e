//! Individual energy terms on dense inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn check_diag(b: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> Result<()> {
    let k = b.nrows();
    if b.ncols() != k || rows.len() != k || cols.len() != k {
        return Err(Error::Shape(format!(
            "map is {}x{}, eigenvalue vectors have lengths {} and {}",
            b.nrows(),
            b.ncols(),
            rows.len(),
            cols.len()
        )));
    }
    Ok(())
}

/// `B diag(rows) - diag(cols) B`, entry `(i, j)` is `b_ij (rows_j - cols_i)`.
pub(crate) fn commutator(b: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * (rows[j] - cols[i]))
}

/// Gradient of `||F||^2` with respect to the map, given the commutator `F`:
/// `2 (F diag(rows) - diag(cols) F)`.
pub(crate) fn commutator_gradient(f: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| 2.0 * f[(i, j)] * (rows[j] - cols[i]))
}

/// Laplacian commutativity energy `||B diag(rows) - diag(cols) B||_F^2`.
pub fn commutativity_energy(b: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> Result<f64> {
    check_diag(b, rows, cols)?;
    Ok(commutator(b, rows, cols).norm_squared())
}

/// Dirichlet energy of the columns of `x` on the row graph, `tr(X^T L X)`.
pub fn dirichlet_rows(x: &DMatrix<f64>, l_rows: &DMatrix<f64>) -> Result<f64> {
    if l_rows.shape() != (x.nrows(), x.nrows()) {
        return Err(Error::Shape(format!(
            "row Laplacian {:?} does not match {} rows",
            l_rows.shape(),
            x.nrows()
        )));
    }
    Ok((l_rows * x).component_mul(x).sum())
}

/// Dirichlet energy of the rows of `x` on the column graph, `tr(X L X^T)`.
pub fn dirichlet_cols(x: &DMatrix<f64>, l_cols: &DMatrix<f64>) -> Result<f64> {
    if l_cols.shape() != (x.ncols(), x.ncols()) {
        return Err(Error::Shape(format!(
            "column Laplacian {:?} does not match {} columns",
            l_cols.shape(),
            x.ncols()
        )));
    }
    Ok((x * l_cols).component_mul(x).sum())
}

fn conjugated_offdiag(r: &DMatrix<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| lambda[i] * r[(i, j)]);
    let mut n = r.tr_mul(&scaled);
    n.fill_diagonal(0.0);
    n
}

/// Sum of squared off-diagonal entries of `R^T diag(lambda) R`.
pub fn offdiag_penalty(r: &DMatrix<f64>, lambda: &DVector<f64>) -> Result<f64> {
    if r.nrows() != lambda.len() || !r.is_square() {
        return Err(Error::Shape(format!(
            "transform is {}x{}, eigenvalues have length {}",
            r.nrows(),
            r.ncols(),
            lambda.len()
        )));
    }
    Ok(conjugated_offdiag(r, lambda).norm_squared())
}

/// Gradient of [`offdiag_penalty`] with respect to `R`: `4 diag(lambda) R off(R^T diag(lambda) R)`.
pub(crate) fn offdiag_gradient(r: &DMatrix<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
    let off = conjugated_offdiag(r, lambda);
    let scaled = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| lambda[i] * r[(i, j)]);
    (scaled * off) * 4.0
}
