use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITERS: usize = 100_000;

/// The `k` lowest-frequency eigenpairs of a graph Laplacian.
///
/// Columns of `vectors` are orthonormal and ordered by ascending eigenvalue.
/// Each column is sign-normalized so that its first non-negligible
/// component is positive, which makes decompositions reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl SpectralBasis {
    /// Wraps precomputed eigenpairs. Only shapes and ordering are checked.
    pub fn from_parts(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(Error::Shape(format!(
                "{} eigenvectors but {} eigenvalues",
                vectors.ncols(),
                values.len()
            )));
        }
        if values.as_slice().windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Argument("eigenvalues must be nondecreasing".into()));
        }
        Ok(SpectralBasis { vectors, values })
    }

    /// Eigenvectors as columns (`n x k`).
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Eigenvalues in ascending order.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    /// `||Phi^T Phi - I||_max`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.vectors.tr_mul(&self.vectors);
        (gram - DMatrix::identity(self.k(), self.k())).amax()
    }

    /// `||L Phi - Phi diag(Lambda)||_F`.
    pub fn residual(&self, laplacian: &DMatrix<f64>) -> f64 {
        let lhs = laplacian * &self.vectors;
        let mut rhs = self.vectors.clone();
        for (mut col, &lambda) in rhs.column_iter_mut().zip(self.values.iter()) {
            col *= lambda;
        }
        (lhs - rhs).norm()
    }
}

/// Computes the `k` smallest eigenpairs of a symmetric Laplacian with a dense
/// symmetric eigensolver.
pub fn spectral_decompose(laplacian: &DMatrix<f64>, k: usize) -> Result<SpectralBasis> {
    let n = laplacian.nrows();
    if laplacian.ncols() != n {
        return Err(Error::Shape(format!(
            "Laplacian must be square, got {}x{}",
            n,
            laplacian.ncols()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "basis size {k} outside 1..={n}"
        )));
    }
    let eigen = SymmetricEigen::try_new(laplacian.clone(), EIGEN_EPS, EIGEN_MAX_ITERS)
        .ok_or_else(|| Error::Numeric(format!("symmetric eigensolver did not converge (n = {n})")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .total_cmp(&eigen.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let mut vectors = DMatrix::zeros(n, k);
    let mut values = DVector::zeros(k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        let mut col = eigen.eigenvectors.column(src).into_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
        values[dst] = eigen.eigenvalues[src];
    }
    Ok(SpectralBasis { vectors, values })
}

/// Flips `v` so that its first component above round-off level is positive.
fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let threshold = scale * 1e-8;
    if let Some(&first) = v.iter().find(|x| x.abs() > threshold) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
