//! Centering, standardization and whitening.

use nalgebra::{DMatrix, DVector};

use crate::data_model::DataMatrix;
use crate::error::{Result, SingError};
use crate::linalg;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_STANDARDIZE_MAX_ITER: usize = 100;
pub const DEFAULT_STANDARDIZE_TOL: f64 = 1e-6;

/// Data with zero row and column means.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredData {
    values: DMatrix<f64>,
    iterations_used: usize,
}

impl CenteredData {
    /// Wraps a matrix that is already double-centered.
    pub fn from_centered(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        let scale = values.amax().max(1.0);
        let row_tol = 1e-8 * p as f64 * scale;
        let col_tol = 1e-8 * n as f64 * scale;
        for (i, r) in values.row_iter().enumerate() {
            if r.sum().abs() > row_tol {
                return Err(SingError::Constraint(format!("row {i} is not centered")));
            }
        }
        for (j, c) in values.column_iter().enumerate() {
            if c.sum().abs() > col_tol {
                return Err(SingError::Constraint(format!("column {j} is not centered")));
            }
        }
        Ok(Self { values, iterations_used: 0 })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn iterations_used(&self) -> usize {
        self.iterations_used
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    #[cfg(test)]
    pub(crate) fn trusted(values: DMatrix<f64>) -> Self {
        Self { values, iterations_used: 1 }
    }
}

/// Removes row and column means: `(I − 11ᵀ/n) X (I − 11ᵀ/p)`.
pub fn double_center(x: &DataMatrix) -> Result<CenteredData> {
    Ok(CenteredData { values: linalg::double_center_matrix(x.values()), iterations_used: 1 })
}

/// Standardizes every feature across subjects (sample variance, `n − 1`).
pub fn standardize_features(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
        let var = c.norm_squared() / (n - 1.0);
        if !(var > 0.0) {
            return Err(SingError::InvalidInput(format!("feature {j} has zero variance")));
        }
        c /= var.sqrt();
    }
    Ok(out)
}

/// One pass of feature standardization followed by subject centering.
pub fn standardize_center_pass(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(linalg::center_rows(&standardize_features(x)?))
}

fn standardization_residual(x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    let mut worst: f64 = 0.0;
    for c in x.column_iter() {
        let mean = c.mean();
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        worst = worst.max(mean.abs()).max((var - 1.0).abs());
    }
    for r in x.row_iter() {
        worst = worst.max((r.sum() / p as f64).abs());
    }
    worst
}

/// Alternates feature standardization and subject centering until feature
/// variances are one and both row and column means vanish (within `tol`).
pub fn iterated_standardize_center(x: &DataMatrix, max_iter: usize, tol: f64) -> Result<CenteredData> {
    if max_iter == 0 {
        return Err(SingError::InvalidConfig("max_iter must be positive".into()));
    }
    let mut cur = x.values().clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        cur = standardize_center_pass(&cur)?;
        residual = standardization_residual(&cur);
        if residual < tol {
            return Ok(CenteredData { values: cur, iterations_used: it });
        }
    }
    Err(SingError::NotConverged { iterations: max_iter, residual })
}

/// Whitened data with its whitening and un-whitening operators.
///
/// `Σ = Xc Xcᵀ / p = V Λ Vᵀ`, `L = V Λ^{-1/2} Vᵀ`, `L⁻¹ = V Λ^{1/2} Vᵀ`,
/// `Xw = L Xc`, all restricted to the retained eigenspace.
#[derive(Debug, Clone)]
pub struct WhitenedData {
    xw: DMatrix<f64>,
    xw_t: DMatrix<f64>,
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    retained_rank: usize,
}

impl WhitenedData {
    /// `n × p` whitened data.
    pub fn xw(&self) -> &DMatrix<f64> {
        &self.xw
    }

    /// Cached transpose of `xw` (`p × n`).
    pub fn xw_t(&self) -> &DMatrix<f64> {
        &self.xw_t
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn l_inv(&self) -> &DMatrix<f64> {
        &self.l_inv
    }

    /// Retained eigenvectors (`n × retained_rank`).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// All eigenvalues of `Σ`, descending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn retained_rank(&self) -> usize {
        self.retained_rank
    }

    pub fn n(&self) -> usize {
        self.xw.nrows()
    }

    pub fn p(&self) -> usize {
        self.xw.ncols()
    }

    /// Whitened data in retained-eigenbasis coordinates (`rank × p`).
    pub fn reduced(&self) -> DMatrix<f64> {
        self.basis.transpose() * &self.xw
    }

    /// Projector onto the retained subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Whitens double-centered data using the economy eigendecomposition of
/// `Xc Xcᵀ / p`; eigenvalues at or below `rank_tol · λ_max` are dropped.
pub fn whiten(xc: &CenteredData, rank_tol: f64) -> Result<WhitenedData> {
    whiten_matrix(xc.values(), rank_tol)
}

fn retained_spectrum(x: &DMatrix<f64>, rank_tol: f64) -> Result<(DVector<f64>, DMatrix<f64>, usize)> {
    let p = x.ncols();
    let sigma = (x * x.transpose()) / p as f64;
    let (vals, vecs) = linalg::sym_eigen_desc(&sigma);
    let lmax = vals[0];
    if !(lmax > 0.0) {
        return Err(SingError::Numerical("all eigenvalues are zero".into()));
    }
    let k = vals.iter().filter(|&&l| l > rank_tol * lmax).count();
    if k == 0 {
        return Err(SingError::Numerical("no eigenvalue above rank threshold".into()));
    }
    Ok((vals, vecs, k))
}

/// Whitened data directly in retained-eigenbasis coordinates,
/// `Λ^{-1/2} Vᵀ X` (`k × p`).
pub(crate) fn reduced_whitened(x: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs, k) = retained_spectrum(x, rank_tol)?;
    let mut proj = vecs.columns(0, k).transpose();
    for (i, mut row) in proj.row_iter_mut().enumerate() {
        row /= vals[i].sqrt();
    }
    Ok(proj * x)
}

pub(crate) fn whiten_matrix(x: &DMatrix<f64>, rank_tol: f64) -> Result<WhitenedData> {
    let n = x.nrows();
    let (vals, vecs, k) = retained_spectrum(x, rank_tol)?;
    let basis = vecs.columns(0, k).into_owned();
    let mut l = DMatrix::zeros(n, n);
    let mut l_inv = DMatrix::zeros(n, n);
    for i in 0..k {
        let v = basis.column(i);
        l.ger(1.0 / vals[i].sqrt(), &v, &v, 1.0);
        l_inv.ger(vals[i].sqrt(), &v, &v, 1.0);
    }
    let xw = &l * x;
    let xw_t = xw.transpose();
    Ok(WhitenedData {
        xw,
        xw_t,
        l,
        l_inv,
        basis,
        eigenvalues: vals.map(|v| v.max(0.0)),
        retained_rank: k,
    })
}
