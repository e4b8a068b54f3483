//! Chordal distances between subject-score columns, greedy matching, and
//! the permutation test for the number of joint components.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SingError};
use crate::lngca::derive_seed;

/// `2 − 2 (xᵀy)² / (‖x‖² ‖y‖²)`, the squared Frobenius distance between the
/// rank-one projectors onto `x` and `y`.
pub fn chordal_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(SingError::DimensionMismatch(format!("lengths {} and {}", x.len(), y.len())));
    }
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    if !(xx > 0.0 && yy > 0.0) {
        return Err(SingError::InvalidInput("chordal distance of a zero vector".into()));
    }
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((2.0 - 2.0 * xy * xy / (xx * yy)).clamp(0.0, 2.0))
}

fn unit_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for (k, mut c) in out.column_iter_mut().enumerate() {
        let n = c.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(SingError::InvalidInput(format!("score column {k} is zero")));
        }
        c /= n;
    }
    Ok(out)
}

/// All pairwise chordal distances between columns (`rx × ry`).
pub fn distance_matrix(mx: &DMatrix<f64>, my: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if mx.nrows() != my.nrows() {
        return Err(SingError::DimensionMismatch("score matrices have different row counts".into()));
    }
    let a = unit_columns(mx)?;
    let b = unit_columns(my)?;
    Ok(pairwise_from_units(&a, &b))
}

fn pairwise_from_units(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let g = a.transpose() * b;
    g.map(|c| (2.0 - 2.0 * c * c).clamp(0.0, 2.0))
}

/// Column pairs `(x, y)` in match order with their distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

impl Matching {
    /// Column order for `Mx`: matched columns first (in match order), then
    /// the remaining columns in their original order.
    pub fn x_order(&self, rx: usize) -> Vec<usize> {
        complete_order(self.pairs.iter().map(|p| p.0), rx)
    }

    pub fn y_order(&self, ry: usize) -> Vec<usize> {
        complete_order(self.pairs.iter().map(|p| p.1), ry)
    }
}

fn complete_order(first: impl Iterator<Item = usize>, r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = first.collect();
    let mut seen = vec![false; r];
    for &k in &order {
        seen[k] = true;
    }
    order.extend((0..r).filter(|&k| !seen[k]));
    order
}

fn greedy_from_distances(d: &DMatrix<f64>) -> Matching {
    let (rx, ry) = d.shape();
    let mut x_used = vec![false; rx];
    let mut y_used = vec![false; ry];
    let mut pairs = Vec::new();
    let mut distances = Vec::new();
    for _ in 0..rx.min(ry) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..rx).filter(|&i| !x_used[i]) {
            for j in (0..ry).filter(|&j| !y_used[j]) {
                // strict comparison keeps the smallest (i, j) on ties
                if best.is_none_or(|b| d[(i, j)] < b.0) {
                    best = Some((d[(i, j)], i, j));
                }
            }
        }
        let (v, i, j) = best.expect("unmatched columns remain");
        x_used[i] = true;
        y_used[j] = true;
        pairs.push((i, j));
        distances.push(v);
    }
    Matching { pairs, distances }
}

/// Repeatedly pairs the closest remaining columns and removes them.
pub fn greedy_match(mx: &DMatrix<f64>, my: &DMatrix<f64>) -> Result<Matching> {
    if mx.ncols() == 0 || my.ncols() == 0 {
        return Err(SingError::InvalidInput("empty score matrix".into()));
    }
    Ok(greedy_from_distances(&distance_matrix(mx, my)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matching: Matching,
    pub p_values: Vec<f64>,
    /// Largest index with `p < alpha`.
    pub r_j: usize,
    pub permutations: usize,
    pub alpha: f64,
    /// Some pair before `r_j` was itself not significant.
    pub non_monotone: bool,
    /// Minimum distance of each permuted draw.
    pub null_minima: Vec<f64>,
}

/// `p_r = (1/T) Σ_t 1(ψ_r > ψ_min^[t])`.
pub fn fwer_p_values(distances: &[f64], null_minima: &[f64]) -> Vec<f64> {
    let t = null_minima.len() as f64;
    distances
        .iter()
        .map(|&psi| null_minima.iter().filter(|&&m| psi > m).count() as f64 / t)
        .collect()
}

/// Returns `(r_J, non_monotone)`.
pub fn select_joint_rank(p_values: &[f64], alpha: f64) -> (usize, bool) {
    let r_j = p_values.iter().rposition(|&p| p < alpha).map_or(0, |i| i + 1);
    let non_monotone = p_values[..r_j].iter().any(|&p| p >= alpha);
    (r_j, non_monotone)
}

/// Permutation test for the number of joint subject-score directions.
///
/// In draw `t` the rows of `My` are shuffled and `ψ_min^[t]` is the smallest
/// chordal distance over all column pairs.
pub fn joint_rank_test(mx: &DMatrix<f64>, my: &DMatrix<f64>, permutations: usize, alpha: f64, seed: u64) -> Result<MatchResult> {
    if permutations == 0 {
        return Err(SingError::InvalidConfig("at least one permutation is required".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SingError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let matching = greedy_match(mx, my)?;
    let a = unit_columns(mx)?;
    let b = unit_columns(my)?;
    let n = b.nrows();
    let null_minima: Vec<f64> = (0..permutations as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t));
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let bp = b.select_rows(&rows);
            pairwise_from_units(&a, &bp).min()
        })
        .collect();
    let p_values = fwer_p_values(&matching.distances, &null_minima);
    let (r_j, non_monotone) = select_joint_rank(&p_values, alpha);
    if non_monotone {
        log::warn!("joint rank test: non-significant pair below the selected rank {r_j}");
    }
    Ok(MatchResult { matching, p_values, r_j, permutations, alpha, non_monotone, null_minima })
}

/// Absolute correlations of matched column pairs (columns centered first).
pub fn matched_correlations(mx: &DMatrix<f64>, my: &DMatrix<f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let a = mx.column(i);
            let b = my.column(j);
            let ac = a.add_scalar(-a.mean());
            let bc = b.add_scalar(-b.mean());
            (ac.dot(&bc) / (ac.norm() * bc.norm())).abs()
        })
        .collect()
}
