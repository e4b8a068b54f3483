//! Evaluation metrics: permutation-invariant error, relative error of the
//! joint signal, and variance decomposition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data_model::{ComponentMatrix, SignedPermutation};
use crate::error::{Result, SingError};
use crate::linalg;

/// Largest size solved by enumerating all permutations.
pub const EXHAUSTIVE_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchStrategy {
    /// Exhaustive for `r ≤ 8`, Hungarian above.
    Auto,
    Exhaustive,
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmseResult {
    /// Mean squared error per entry after the best signed permutation.
    pub pmse: f64,
    pub permutation: SignedPermutation,
}

impl PmseResult {
    pub fn root(&self) -> f64 {
        self.pmse.sqrt()
    }
}

/// Centers each row and scales it to unit (population) variance.
pub fn standardize_rows(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = linalg::center_rows(a);
    let p = a.ncols() as f64;
    for (i, mut r) in out.row_iter_mut().enumerate() {
        let sd = (r.norm_squared() / p).sqrt();
        if !(sd > 0.0) {
            return Err(SingError::InvalidInput(format!("row {i} is constant")));
        }
        r /= sd;
    }
    Ok(out)
}

/// Finds the assignment `perm` maximizing `Σ_i |c[i, perm[i]]|`.
fn best_assignment(c: &DMatrix<f64>, strategy: MatchStrategy) -> Vec<usize> {
    let r = c.nrows();
    let abs = c.abs();
    match strategy {
        MatchStrategy::Exhaustive => exhaustive_assignment(&abs),
        MatchStrategy::Hungarian => hungarian_max(&abs),
        MatchStrategy::Greedy => greedy_assignment(&abs),
        MatchStrategy::Auto if r <= EXHAUSTIVE_MAX => exhaustive_assignment(&abs),
        MatchStrategy::Auto => hungarian_max(&abs),
    }
}

fn exhaustive_assignment(w: &DMatrix<f64>) -> Vec<usize> {
    let r = w.nrows();
    let mut best = (f64::NEG_INFINITY, (0..r).collect::<Vec<_>>());
    let mut cur = Vec::with_capacity(r);
    let mut used = vec![false; r];
    fn rec(w: &DMatrix<f64>, cur: &mut Vec<usize>, used: &mut [bool], acc: f64, best: &mut (f64, Vec<usize>)) {
        let i = cur.len();
        if i == w.nrows() {
            if acc > best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for k in 0..w.nrows() {
            if !used[k] {
                used[k] = true;
                cur.push(k);
                rec(w, cur, used, acc + w[(i, k)], best);
                cur.pop();
                used[k] = false;
            }
        }
    }
    rec(w, &mut cur, &mut used, 0.0, &mut best);
    best.1
}

fn greedy_assignment(w: &DMatrix<f64>) -> Vec<usize> {
    let r = w.nrows();
    let mut perm = vec![usize::MAX; r];
    let mut row_used = vec![false; r];
    let mut col_used = vec![false; r];
    for _ in 0..r {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for i in (0..r).filter(|&i| !row_used[i]) {
            for k in (0..r).filter(|&k| !col_used[k]) {
                if w[(i, k)] > best.0 {
                    best = (w[(i, k)], i, k);
                }
            }
        }
        row_used[best.1] = true;
        col_used[best.2] = true;
        perm[best.1] = best.2;
    }
    perm
}

/// Kuhn–Munkres (shortest augmenting path form) maximizing total weight.
pub(crate) fn hungarian_max(w: &DMatrix<f64>) -> Vec<usize> {
    let n = w.nrows();
    let cost = |i: usize, j: usize| -w[(i, j)];
    // 1-based potentials, column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Signed permutation `P` minimizing `‖S − P Ŝ‖_F` after row standardization.
pub fn match_for_pmse(s: &DMatrix<f64>, s_hat: &DMatrix<f64>, strategy: MatchStrategy) -> Result<SignedPermutation> {
    Ok(pmse_with(s, s_hat, strategy)?.permutation)
}

fn pmse_with(s: &DMatrix<f64>, s_hat: &DMatrix<f64>, strategy: MatchStrategy) -> Result<PmseResult> {
    if s.shape() != s_hat.shape() {
        return Err(SingError::DimensionMismatch(format!(
            "{:?} versus {:?}",
            s.shape(),
            s_hat.shape()
        )));
    }
    let (r, p) = s.shape();
    if r == 0 || p == 0 {
        return Err(SingError::InvalidInput("empty matrices".into()));
    }
    let a = standardize_rows(s)?;
    let b = standardize_rows(s_hat)?;
    let c = (&a * b.transpose()) / p as f64;
    let perm = best_assignment(&c, strategy);
    let signs: Vec<i8> = (0..r).map(|i| if c[(i, perm[i])] < 0.0 { -1 } else { 1 }).collect();
    let permutation = SignedPermutation::new(perm, signs)?;
    let diff = &a - permutation.apply_rows(&b)?;
    let pmse = linalg::frobenius_sq(&diff) / (r * p) as f64;
    Ok(PmseResult { pmse, permutation })
}

/// Permutation-invariant MSE between component matrices (rows are loadings).
pub fn pmse(s: &DMatrix<f64>, s_hat: &DMatrix<f64>) -> Result<PmseResult> {
    pmse_with(s, s_hat, MatchStrategy::Auto)
}

pub fn pmse_components(s: &ComponentMatrix, s_hat: &ComponentMatrix) -> Result<PmseResult> {
    pmse(s.values(), s_hat.values())
}

/// Permutation-invariant MSE between mixing matrices (columns are scores).
pub fn pmse_mixing(m: &DMatrix<f64>, m_hat: &DMatrix<f64>) -> Result<PmseResult> {
    pmse(&m.transpose(), &m_hat.transpose())
}

pub fn pmse_strategy(s: &DMatrix<f64>, s_hat: &DMatrix<f64>, strategy: MatchStrategy) -> Result<PmseResult> {
    pmse_with(s, s_hat, strategy)
}

/// `√(‖J − Ĵ‖_F² / ‖J‖_F²)`.
pub fn mse_joint(j: &DMatrix<f64>, j_hat: &DMatrix<f64>) -> Result<f64> {
    if j.shape() != j_hat.shape() {
        return Err(SingError::DimensionMismatch(format!("{:?} versus {:?}", j.shape(), j_hat.shape())));
    }
    let denom = linalg::frobenius_sq(j);
    if !(denom > 0.0) {
        return Err(SingError::InvalidInput("true joint signal is zero".into()));
    }
    Ok((linalg::frobenius_sq(&(j - j_hat)) / denom).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub r2_joint: f64,
    pub r2_individual: f64,
    pub r2_noise: f64,
    pub snr: f64,
}

impl VarianceDecomposition {
    pub fn r2_signal(&self) -> f64 {
        self.r2_joint + self.r2_individual
    }
}

fn projected_share(x: &DMatrix<f64>, s: &DMatrix<f64>, total: f64) -> f64 {
    if s.nrows() == 0 {
        return 0.0;
    }
    let p = s.ncols() as f64;
    let proj = (x * s.transpose()) * s / p;
    linalg::frobenius_sq(&proj) / total
}

/// Variance shares of the joint and individual component subspaces.
///
/// `s_i` may have zero rows.
pub fn variance_decomposition(x: &DMatrix<f64>, s_j: &DMatrix<f64>, s_i: &DMatrix<f64>) -> Result<VarianceDecomposition> {
    let p = x.ncols();
    if s_j.ncols() != p || (s_i.nrows() > 0 && s_i.ncols() != p) {
        return Err(SingError::DimensionMismatch("component length differs from feature count".into()));
    }
    let total = linalg::frobenius_sq(x);
    if !(total > 0.0) {
        return Err(SingError::InvalidInput("data matrix is zero".into()));
    }
    let r2_joint = projected_share(x, s_j, total);
    let r2_individual = projected_share(x, s_i, total);
    let r2_noise = (1.0 - r2_joint - r2_individual).max(0.0);
    let snr = if r2_noise > 0.0 { (r2_joint + r2_individual) / r2_noise } else { f64::INFINITY };
    Ok(VarianceDecomposition { r2_joint, r2_individual, r2_noise, snr })
}
