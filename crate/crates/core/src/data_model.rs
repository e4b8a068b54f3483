//! Core numeric types shared across the pipeline.
//!
//! All matrices are dense. Data matrices are subjects × features, component
//! matrices are components × features (one loading vector per row), mixing
//! matrices are subjects × components (one score vector per column), and
//! unmixing matrices are components × subjects.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SingError};
use crate::linalg;

/// Tolerance for `S Sᵀ = p I` and `U Uᵀ = I` checks at construction.
pub const ORTHO_TOL: f64 = 1e-8;
/// Tolerance for unit-norm score columns.
pub const UNIT_NORM_TOL: f64 = 1e-10;

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(SingError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Raw input data: `n` subjects (rows) by `p` features (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 3 {
            return Err(SingError::InvalidInput(format!("need at least 3 subjects, got {n}")));
        }
        if p < 1 {
            return Err(SingError::InvalidInput("need at least 1 feature".into()));
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    /// Builds from a row-major buffer.
    pub fn from_row_slice(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return Err(SingError::DimensionMismatch(format!(
                "buffer has {} values, expected {n}×{p}",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// `r` loading vectors of length `p` with `S Sᵀ = p I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMatrix {
    values: DMatrix<f64>,
}

impl ComponentMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(values, ORTHO_TOL)
    }

    pub fn with_tolerance(values: DMatrix<f64>, tol: f64) -> Result<Self> {
        check_finite(&values)?;
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(SingError::InvalidInput("empty component matrix".into()));
        }
        let err = linalg::scaled_gram_error(&values);
        if err > tol {
            return Err(SingError::Constraint(format!(
                "S Sᵀ / p deviates from identity by {err:.3e} (tolerance {tol:.1e})"
            )));
        }
        Ok(Self { values })
    }

    /// Rescales rows to mean-square one after symmetric orthogonalization.
    pub fn orthonormalized(values: &DMatrix<f64>) -> Result<Self> {
        let p = values.ncols() as f64;
        let q = linalg::orthonormalize_rows(values)?;
        Ok(Self { values: q * p.sqrt() })
    }

    pub(crate) fn trusted(values: DMatrix<f64>) -> Self {
        debug_assert!(linalg::scaled_gram_error(&values) < 1e-5);
        Self { values }
    }

    pub fn r(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { values: self.values.select_rows(rows) }
    }
}

/// Subject-score matrix (`n × r`), full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    values: DMatrix<f64>,
    unit_columns: bool,
}

impl MixingMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(SingError::InvalidInput("empty mixing matrix".into()));
        }
        if values.ncols() > values.nrows() {
            return Err(SingError::Constraint("more score columns than subjects".into()));
        }
        let sv = values.singular_values();
        let smax = sv.max();
        if !(sv.min() > 1e-12 * smax.max(1e-300)) {
            return Err(SingError::Constraint("mixing matrix is column-rank deficient".into()));
        }
        Ok(Self { values, unit_columns: false })
    }

    /// Mixing matrix whose columns all have unit Euclidean norm.
    pub fn unit(values: DMatrix<f64>) -> Result<Self> {
        for (k, c) in values.column_iter().enumerate() {
            let dev = (c.norm() - 1.0).abs();
            if dev > UNIT_NORM_TOL {
                return Err(SingError::Constraint(format!("column {k} norm deviates from 1 by {dev:.3e}")));
            }
        }
        let mut m = Self::new(values)?;
        m.unit_columns = true;
        Ok(m)
    }

    pub(crate) fn trusted(values: DMatrix<f64>, unit_columns: bool) -> Self {
        Self { values, unit_columns }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn r(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_unit(&self) -> bool {
        self.unit_columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Unmixing matrix (`r × n`) with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct UnmixingMatrix {
    values: DMatrix<f64>,
}

impl UnmixingMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        let err = linalg::orthogonality_error(&values);
        if err > ORTHO_TOL {
            return Err(SingError::Constraint(format!("‖U Uᵀ − I‖_F = {err:.3e}")));
        }
        Ok(Self { values })
    }

    pub(crate) fn trusted(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn r(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// A signed permutation: row `i` of the output is `signs[i] * input[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        let r = perm.len();
        if signs.len() != r {
            return Err(SingError::DimensionMismatch("perm and signs lengths differ".into()));
        }
        let mut seen = vec![false; r];
        for &k in &perm {
            if k >= r || seen[k] {
                return Err(SingError::InvalidInput(format!("{perm:?} is not a permutation")));
            }
            seen[k] = true;
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(SingError::InvalidInput("signs must be ±1".into()));
        }
        Ok(Self { perm, signs })
    }

    pub fn identity(r: usize) -> Self {
        Self { perm: (0..r).collect(), signs: vec![1; r] }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn inverse(&self) -> Self {
        let r = self.len();
        let mut perm = vec![0; r];
        let mut signs = vec![1; r];
        for (i, &k) in self.perm.iter().enumerate() {
            perm[k] = i;
            signs[k] = self.signs[i];
        }
        Self { perm, signs }
    }

    /// Applies to the rows of an arbitrary matrix.
    pub fn apply_rows(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.len() {
            return Err(SingError::DimensionMismatch(format!(
                "permutation of size {} applied to {} rows",
                self.len(),
                m.nrows()
            )));
        }
        let mut out = m.select_rows(&self.perm);
        for (i, &s) in self.signs.iter().enumerate() {
            if s < 0 {
                out.row_mut(i).neg_mut();
            }
        }
        Ok(out)
    }
}

/// Reorders and sign-flips the rows of a component matrix.
pub fn apply_signed_permutation(s: &ComponentMatrix, p: &SignedPermutation) -> Result<ComponentMatrix> {
    Ok(ComponentMatrix { values: p.apply_rows(s.values())? })
}
