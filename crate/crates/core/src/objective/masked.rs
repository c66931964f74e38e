use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Binary observation mask stored as a 0/1 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask(DMatrix<f64>);

impl Mask {
    /// Wraps a matrix whose entries must all be exactly 0 or 1.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if let Some(v) = m.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Validation(format!("mask entry {v} is not 0 or 1")));
        }
        Ok(Mask(m))
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Mask(DMatrix::from_element(rows, cols, 1.0))
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Mask(DMatrix::zeros(rows, cols))
    }

    pub fn from_indices(rows: usize, cols: usize, indices: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = DMatrix::zeros(rows, cols);
        for (i, j) in indices {
            if i >= rows || j >= cols {
                return Err(Error::Argument(format!("index ({i}, {j}) outside {rows}x{cols}")));
            }
            m[(i, j)] = 1.0;
        }
        Ok(Mask(m))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.0[(i, j)] == 1.0
    }

    /// Set entries in column-major order.
    pub fn indices(&self) -> Vec<(usize, usize)> {
        let (rows, cols) = self.shape();
        (0..cols)
            .flat_map(|j| (0..rows).map(move |i| (i, j)))
            .filter(|&(i, j)| self.contains(i, j))
            .collect()
    }

    pub fn complement(&self) -> Mask {
        Mask(self.0.map(|v| 1.0 - v))
    }

    fn check_shape(&self, other: &Mask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "mask shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        Ok(Mask(self.0.zip_map(&other.0, f64::max)))
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        Ok(Mask(self.0.component_mul(&other.0)))
    }

    /// Entries of `self` not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        Ok(Mask(self.0.zip_map(&other.0, |a, b| a * (1.0 - b))))
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        self.shape() == other.shape() && self.0.iter().zip(other.0.iter()).all(|(a, b)| a * b == 0.0)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape() && self.0.iter().zip(other.0.iter()).all(|(a, b)| a <= b)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Ground-truth values together with the mask of entries that are known.
/// Unobserved entries are stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: DMatrix<f64>,
    mask: Mask,
}

impl MaskedMatrix {
    /// Requires `values` to already be zero outside `mask`.
    pub fn new(values: DMatrix<f64>, mask: Mask) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if values
            .iter()
            .zip(mask.as_matrix().iter())
            .any(|(&v, &s)| s == 0.0 && v != 0.0)
        {
            return Err(Error::Validation("unobserved entries must be stored as 0".into()));
        }
        Ok(MaskedMatrix { values, mask })
    }

    /// Keeps the entries of `full` selected by `mask` and zeroes the rest.
    pub fn observe(full: &DMatrix<f64>, mask: Mask) -> Result<Self> {
        if full.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "values {:?} vs mask {:?}",
                full.shape(),
                mask.shape()
            )));
        }
        let values = full.component_mul(mask.as_matrix());
        Ok(MaskedMatrix { values, mask })
    }

    /// Same data seen through a sub-mask.
    pub fn restrict(&self, sub: &Mask) -> Result<Self> {
        if !sub.is_subset_of(&self.mask) {
            return Err(Error::Argument("restriction mask is not a subset of the observed entries".into()));
        }
        MaskedMatrix::observe(&self.values, sub.clone())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// Observed `(i, j, value)` triples in column-major order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.mask
            .indices()
            .into_iter()
            .map(|(i, j)| (i, j, self.values[(i, j)]))
            .collect()
    }
}
