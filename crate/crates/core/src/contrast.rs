//! Jarque–Bera non-Gaussianity contrast.
//!
//! For a loading vector `s` of length `p` with mean-square one,
//! `f(s) = α γ² + (1 − α) κ²` where `γ = mean(s³)` and `κ = mean(s⁴) − 3`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SingError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub alpha: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self { alpha: 0.8 }
    }
}

impl ContrastConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = Self { alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SingError::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

fn nonempty(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(SingError::InvalidInput("empty vector".into()));
    }
    Ok(())
}

/// Third and fourth raw moments in a single pass.
#[inline]
pub(crate) fn moments34(s: &[f64]) -> (f64, f64) {
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in s {
        let v2 = v * v;
        m3 += v2 * v;
        m4 += v2 * v2;
    }
    let p = s.len() as f64;
    (m3 / p, m4 / p)
}

/// `(1/p) Σ s³`.
pub fn skewness(s: &[f64]) -> Result<f64> {
    nonempty(s)?;
    Ok(moments34(s).0)
}

/// `(1/p) Σ s⁴ − 3`.
pub fn excess_kurtosis(s: &[f64]) -> Result<f64> {
    nonempty(s)?;
    Ok(moments34(s).1 - 3.0)
}

#[inline]
pub(crate) fn jb_unchecked(s: &[f64], alpha: f64) -> f64 {
    let (g, m4) = moments34(s);
    let k = m4 - 3.0;
    alpha * g * g + (1.0 - alpha) * k * k
}

pub fn jb(s: &[f64], cfg: &ContrastConfig) -> Result<f64> {
    nonempty(s)?;
    Ok(jb_unchecked(s, cfg.alpha))
}

/// JB value of every row of `s`.
pub fn jb_rows(s: &DMatrix<f64>, cfg: &ContrastConfig) -> Vec<f64> {
    s.row_iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().copied().collect();
            jb_unchecked(&v, cfg.alpha)
        })
        .collect()
}

fn check_gradient_dims(u: &DVector<f64>, xw: &DMatrix<f64>) -> Result<()> {
    if u.len() != xw.nrows() {
        return Err(SingError::DimensionMismatch(format!(
            "u has length {}, whitened data has {} rows",
            u.len(),
            xw.nrows()
        )));
    }
    if xw.ncols() == 0 {
        return Err(SingError::InvalidInput("whitened data has no features".into()));
    }
    Ok(())
}

/// `t_α(u) = 6αγ Σ_j x_j s_j² + 8(1−α)κ Σ_j x_j s_j³` with `s = uᵀXw`.
///
/// The inner terms are sums, so this equals `p` times the gradient of
/// `jb(uᵀXw)` taken with means.
pub fn jb_gradient(u: &DVector<f64>, xw: &DMatrix<f64>, cfg: &ContrastConfig) -> Result<DVector<f64>> {
    check_gradient_dims(u, xw)?;
    let s: Vec<f64> = (u.transpose() * xw).iter().copied().collect();
    let (g, m4) = moments34(&s);
    let k = m4 - 3.0;
    let a = 6.0 * cfg.alpha * g;
    let b = 8.0 * (1.0 - cfg.alpha) * k;
    let h = DVector::from_iterator(s.len(), s.iter().map(|&v| a * v * v + b * v * v * v));
    Ok(xw * h)
}

/// Gradient of `jb(uᵀXw)` itself (means throughout): `jb_gradient / p`.
pub fn jb_gradient_mean(u: &DVector<f64>, xw: &DMatrix<f64>, cfg: &ContrastConfig) -> Result<DVector<f64>> {
    Ok(jb_gradient(u, xw, cfg)? / xw.ncols() as f64)
}

/// Column-wise contrast terms for a score matrix `st` (`p × r`, one
/// component per column): JB values, skewness, excess kurtosis, and the
/// matrix `H` with `H[:, l] = 6αγ_l s² + 8(1−α)κ_l s³` so that
/// `Xw · H / p` stacks the mean-normalized gradients.
pub(crate) struct ColumnTerms {
    pub jb: Vec<f64>,
    pub gamma: Vec<f64>,
    pub kappa: Vec<f64>,
    pub h: DMatrix<f64>,
}

pub(crate) fn column_terms(st: &DMatrix<f64>, alpha: f64, with_h: bool) -> ColumnTerms {
    let (p, r) = st.shape();
    let mut jb = Vec::with_capacity(r);
    let mut gamma = Vec::with_capacity(r);
    let mut kappa = Vec::with_capacity(r);
    let mut h = if with_h { DMatrix::zeros(p, r) } else { DMatrix::zeros(0, 0) };
    for l in 0..r {
        let col = st.column(l);
        let s = col.as_slice();
        let (g, m4) = moments34(s);
        let k = m4 - 3.0;
        gamma.push(g);
        kappa.push(k);
        jb.push(alpha * g * g + (1.0 - alpha) * k * k);
        if with_h {
            let a = 6.0 * alpha * g;
            let b = 8.0 * (1.0 - alpha) * k;
            let mut hc = h.column_mut(l);
            for (dst, &v) in hc.iter_mut().zip(s) {
                let v2 = v * v;
                *dst = v2 * (a + b * v);
            }
        }
    }
    ColumnTerms { jb, gamma, kappa, h }
}
