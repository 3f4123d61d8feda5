//! Dense matrix carriers for data, factors and observation masks.
//!
//! All values are validated finite on construction. Internally the matrices
//! wrap [`nalgebra::DMatrix`]; the public constructors and accessors speak
//! row-major order.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, shape, DlmError, Result};

/// A finite, rectangular real matrix with at least one row and one column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(shape(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, &data))
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(shape("ragged rows"));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    /// Wraps an existing nalgebra matrix after validating it.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            let (r, c) = (pos % m.nrows(), pos / m.nrows());
            return Err(DlmError::NonFinite(format!("entry ({r}, {c}) is {}", m[(r, c)])));
        }
        Ok(Self(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        Self(DMatrix::identity(n, n))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        Self::new(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[(r, c)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Matrix product, validating conforming shapes.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols() != rhs.rows() {
            return Err(shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        DenseMatrix::new(&self.0 * &rhs.0)
    }
}

impl AsRef<DMatrix<f64>> for DenseMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<DMatrix<f64>> for DenseMatrix {
    type Error = DlmError;

    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m)
    }
}

#[derive(Serialize, Deserialize)]
struct RowMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RowMajor { rows: self.rows(), cols: self.cols(), data: self.to_row_major() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RowMajor::deserialize(d)?;
        DenseMatrix::from_row_major(raw.rows, raw.cols, raw.data).map_err(serde::de::Error::custom)
    }
}

/// Matrix values together with an observation mask (`true` = observed).
///
/// Unobserved values are stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: DenseMatrix,
    mask: DMatrix<bool>,
    weights: DMatrix<f64>,
    observed: usize,
}

impl ObservedMatrix {
    /// `mask` is row-major with the same shape as `values`.
    pub fn new(values: DenseMatrix, mask: Vec<bool>) -> Result<Self> {
        let (rows, cols) = values.shape();
        if mask.len() != rows * cols {
            return Err(shape(format!("mask has {} entries, values have {}", mask.len(), rows * cols)));
        }
        let mask = DMatrix::from_row_slice(rows, cols, &mask);
        let observed = mask.iter().filter(|m| **m).count();
        if observed == 0 {
            return Err(invalid("at least one entry must be observed"));
        }
        let weights = mask.map(|m| if m { 1.0 } else { 0.0 });
        let values = DenseMatrix(values.0.component_mul(&weights));
        Ok(Self { values, mask, weights, observed })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn is_observed(&self, r: usize, c: usize) -> bool {
        self.mask[(r, c)]
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// 0/1 indicator matrix of the observed set.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

/// Data a loss is evaluated against: fully observed, or masked.
#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Full(DenseMatrix),
    Masked(ObservedMatrix),
}

impl Observations {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Observations::Full(m) => m.shape(),
            Observations::Masked(m) => m.shape(),
        }
    }

    pub fn values(&self) -> &DenseMatrix {
        match self {
            Observations::Full(m) => m,
            Observations::Masked(m) => m.values(),
        }
    }

    pub fn mask(&self) -> Option<&DMatrix<f64>> {
        match self {
            Observations::Full(_) => None,
            Observations::Masked(m) => Some(m.weights()),
        }
    }

    pub fn samples(&self) -> usize {
        self.shape().1
    }

    pub fn observed_count(&self) -> usize {
        match self {
            Observations::Full(m) => m.rows() * m.cols(),
            Observations::Masked(m) => m.observed_count(),
        }
    }
}

impl From<DenseMatrix> for Observations {
    fn from(m: DenseMatrix) -> Self {
        Observations::Full(m)
    }
}

impl From<ObservedMatrix> for Observations {
    fn from(m: ObservedMatrix) -> Self {
        Observations::Masked(m)
    }
}

/// A dictionary `d` (d×k) and codes `h` (k×T) with a shared inner dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    d: DenseMatrix,
    h: DenseMatrix,
}

impl Factorization {
    pub fn new(d: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if d.cols() != h.rows() {
            return Err(shape(format!("dictionary has {} columns but codes have {} rows", d.cols(), h.rows())));
        }
        Ok(Self { d, h })
    }

    pub(crate) fn from_parts(d: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        Self::new(DenseMatrix::new(d)?, DenseMatrix::new(h)?)
    }

    pub fn d(&self) -> &DenseMatrix {
        &self.d
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn k(&self) -> usize {
        self.d.cols()
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix) {
        (self.d, self.h)
    }

    /// The reconstruction `Z = D H`.
    pub fn product(&self) -> DenseMatrix {
        DenseMatrix(self.d.as_matrix() * self.h.as_matrix())
    }
}
