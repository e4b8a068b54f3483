//! SING-averaged: one shared score matrix from the average of matched
//! separate-fit columns, with components re-estimated by alternating
//! Procrustes and diagonal updates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data_model::{ComponentMatrix, MixingMatrix};
use crate::error::{Result, SingError};
use crate::linalg::frobenius_sq;
use crate::lngca::LngcaFit;
use crate::matching::Matching;
use crate::sing::scaled_product;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesConfig {
    /// Stop once `‖ΔD‖_∞` falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProcrustesConfig {
    fn default() -> Self {
        Self { tol: 0.1, max_iter: 100 }
    }
}

impl ProcrustesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(SingError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SingError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Refit {
    pub s: ComponentMatrix,
    pub d: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Ĵ − M D S‖²_F` at the start and after every S update and every D update.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AveragedFit {
    pub m_j: MixingMatrix,
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
    pub s_jx: ComponentMatrix,
    pub s_jy: ComponentMatrix,
    pub procrustes_iterations: (usize, usize),
    pub converged: bool,
    pub objective_trace_x: Vec<f64>,
    pub objective_trace_y: Vec<f64>,
}

impl AveragedFit {
    pub fn r_j(&self) -> usize {
        self.d_x.len()
    }

    pub fn j_x(&self) -> DMatrix<f64> {
        scaled_product(self.m_j.values(), &self.d_x, self.s_jx.values())
    }

    pub fn j_y(&self) -> DMatrix<f64> {
        scaled_product(self.m_j.values(), &self.d_y, self.s_jy.values())
    }
}

/// Unit-normed columns and their norms.
fn split_norms(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.ncols());
    for (k, mut c) in out.column_iter_mut().enumerate() {
        let n = c.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(SingError::InvalidInput(format!("column {k} is zero")));
        }
        c /= n;
        norms.push(n);
    }
    Ok((out, norms))
}

/// Average of matched columns after unit-norming and aligning signs so each
/// pair has a non-negative inner product. Returns the averaged unit columns
/// and the sign (±1) applied to each Y column.
pub fn average_mixing_signed(mx: &DMatrix<f64>, my: &DMatrix<f64>) -> Result<(MixingMatrix, Vec<f64>)> {
    if mx.shape() != my.shape() {
        return Err(SingError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            mx.nrows(),
            mx.ncols(),
            my.nrows(),
            my.ncols()
        )));
    }
    if mx.ncols() == 0 {
        return Err(SingError::InvalidInput("no columns to average".into()));
    }
    let (ux, _) = split_norms(mx)?;
    let (uy, _) = split_norms(my)?;
    let mut out = DMatrix::zeros(mx.nrows(), mx.ncols());
    let mut signs = Vec::with_capacity(mx.ncols());
    for l in 0..mx.ncols() {
        let sign = if ux.column(l).dot(&uy.column(l)) < 0.0 { -1.0 } else { 1.0 };
        let avg = (ux.column(l) + uy.column(l) * sign) * 0.5;
        let n = avg.norm();
        // after alignment the norm is at least 1/√2
        if !(n > 1e-12) {
            return Err(SingError::Numerical(format!("column pair {l} cancels")));
        }
        out.set_column(l, &(avg / n));
        signs.push(sign);
    }
    Ok((MixingMatrix::trusted(out, true), signs))
}

pub fn average_mixing(mx: &DMatrix<f64>, my: &DMatrix<f64>) -> Result<MixingMatrix> {
    average_mixing_signed(mx, my).map(|(m, _)| m)
}

/// `‖Ĵ − M D S‖²_F`.
pub fn refit_objective(j_hat: &DMatrix<f64>, m: &DMatrix<f64>, d: &[f64], s: &DMatrix<f64>) -> f64 {
    frobenius_sq(&(j_hat - scaled_product(m, d, s)))
}

/// Minimizer of `‖Ĵ − M D S‖²_F` over `S` with `SSᵀ = pI`:
/// `S = √p (AᵀA)^{-1/2} Aᵀ` with `A = Ĵᵀ M D`.
pub fn procrustes_components(j_hat: &DMatrix<f64>, m: &DMatrix<f64>, d: &[f64]) -> Result<DMatrix<f64>> {
    let p = j_hat.ncols() as f64;
    let mut md = m.clone();
    for (mut c, &dl) in md.column_iter_mut().zip(d) {
        c *= dl;
    }
    let a = j_hat.transpose() * md;
    let r = a.ncols();
    let svd = a.svd(true, true);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if !(smin > 1e-12 * smax.max(1e-300)) || svd.singular_values.len() < r {
        return Err(SingError::Numerical("Procrustes input is rank deficient".into()));
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Ok((u * vt).transpose() * p.sqrt())
}

/// `d_l = s_lᵀ Ĵᵀ m_l / p`, exact for unit-norm columns of `M` and `SSᵀ = pI`.
pub fn diagonal_update(j_hat: &DMatrix<f64>, m: &DMatrix<f64>, s: &DMatrix<f64>) -> Vec<f64> {
    let p = j_hat.ncols() as f64;
    let js = j_hat * s.transpose();
    (0..m.ncols()).map(|l| m.column(l).dot(&js.column(l)) / p).collect()
}

/// Alternates the Procrustes and diagonal updates starting from `d0`.
pub fn procrustes_refit(j_hat: &DMatrix<f64>, m_j: &MixingMatrix, d0: &[f64], cfg: &ProcrustesConfig) -> Result<Refit> {
    cfg.validate()?;
    let m = m_j.values();
    if !m_j.is_unit() {
        return Err(SingError::InvalidInput("shared score columns must be unit norm".into()));
    }
    if j_hat.nrows() != m.nrows() || d0.len() != m.ncols() {
        return Err(SingError::DimensionMismatch(format!(
            "J is {}x{}, M is {}x{}, {} scales",
            j_hat.nrows(),
            j_hat.ncols(),
            m.nrows(),
            m.ncols(),
            d0.len()
        )));
    }
    if m.ncols() > j_hat.ncols() {
        return Err(SingError::InvalidInput("more components than features".into()));
    }
    let mut d = d0.to_vec();
    let mut trace = Vec::new();
    let mut s = procrustes_components(j_hat, m, &d)?;
    trace.push(refit_objective(j_hat, m, &d, &s));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let d_new = diagonal_update(j_hat, m, &s);
        trace.push(refit_objective(j_hat, m, &d_new, &s));
        let change = d.iter().zip(&d_new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d = d_new;
        if change < cfg.tol {
            converged = true;
            break;
        }
        s = procrustes_components(j_hat, m, &d)?;
        trace.push(refit_objective(j_hat, m, &d, &s));
    }
    if !converged {
        log::warn!("Procrustes refit stopped after {} alternations", cfg.max_iter);
    }
    Ok(Refit { s: ComponentMatrix::trusted(s), d, iterations, converged, objective_trace: trace })
}

/// SING-averaged from two separate fits and a column matching; the first
/// `r_j` matched pairs are treated as joint.
pub fn fit_sing_averaged(
    fit_x: &LngcaFit,
    fit_y: &LngcaFit,
    matching: &Matching,
    r_j: usize,
    cfg: &ProcrustesConfig,
) -> Result<AveragedFit> {
    if r_j == 0 || r_j > matching.pairs.len() {
        return Err(SingError::InvalidInput(format!(
            "r_J = {r_j} must be between 1 and the {} matched pairs",
            matching.pairs.len()
        )));
    }
    let pairs = &matching.pairs[..r_j];
    let ix: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let iy: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mx = fit_x.m.values().select_columns(&ix);
    let my = fit_y.m.values().select_columns(&iy);
    let j_x = &mx * fit_x.s.values().select_rows(&ix);
    let j_y = &my * fit_y.s.values().select_rows(&iy);
    let (_, dx0) = split_norms(&mx)?;
    let (_, mut dy0) = split_norms(&my)?;
    let (m_j, signs) = average_mixing_signed(&mx, &my)?;
    for (d, s) in dy0.iter_mut().zip(&signs) {
        *d *= s;
    }
    let rx = procrustes_refit(&j_x, &m_j, &dx0, cfg)?;
    let ry = procrustes_refit(&j_y, &m_j, &dy0, cfg)?;
    Ok(AveragedFit {
        m_j,
        d_x: rx.d,
        d_y: ry.d,
        s_jx: rx.s,
        s_jy: ry.s,
        procrustes_iterations: (rx.iterations, ry.iterations),
        converged: rx.converged && ry.converged,
        objective_trace_x: rx.objective_trace,
        objective_trace_y: ry.objective_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram_schmidt_rows, scaled_gram_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn unit_cols(m: DMatrix<f64>) -> MixingMatrix {
        MixingMatrix::unit(split_norms(&m).unwrap().0).unwrap()
    }

    fn orthogonal_rows(rng: &mut ChaCha8Rng, r: usize, p: usize) -> DMatrix<f64> {
        gram_schmidt_rows(&gaussian(rng, r, p)).unwrap() * (p as f64).sqrt()
    }

    #[test]
    fn averaging_identical_columns_returns_them() {
        let m = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 4.0, 1.0, 0.0, 1.0]);
        let a = average_mixing(&m, &m).unwrap();
        assert!((a.values().column(0) - m.column(0) / 5.0).norm() < 1e-15);
        assert!((a.values().column(1) - m.column(1) / 2f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn sign_flipped_copy_averages_to_original() {
        let m = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -2.0]);
        let (a, signs) = average_mixing_signed(&m, &(-&m * 2.0)).unwrap();
        assert_eq!(signs, vec![-1.0]);
        assert!((a.values() - &m / 3.0).norm() < 1e-15);
    }

    #[test]
    fn average_of_sixty_degree_pair_bisects() {
        let t = std::f64::consts::FRAC_PI_3;
        let mx = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let my = DMatrix::from_row_slice(2, 1, &[t.cos(), t.sin()]);
        let a = average_mixing(&mx, &my).unwrap();
        let half = t / 2.0;
        assert!((a.values()[(0, 0)] - half.cos()).abs() < 1e-15);
        assert!((a.values()[(1, 0)] - half.sin()).abs() < 1e-15);
        // and the same after flipping and rescaling the second vector
        let b = average_mixing(&(mx * 7.0), &(-my)).unwrap();
        assert!((b.values() - a.values()).norm() < 1e-15);
    }

    #[test]
    fn averaging_rejects_bad_input() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(average_mixing(&m, &DMatrix::zeros(2, 1)).is_err());
        assert!(average_mixing(&m, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn refit_of_own_columns_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, p, r) = (8, 60, 3);
        let s = orthogonal_rows(&mut rng, r, p);
        let m = unit_cols(gaussian(&mut rng, n, r));
        let d = vec![3.0, -1.5, 0.7];
        let j = scaled_product(m.values(), &d, &s);
        let fit = procrustes_refit(&j, &m, &d, &ProcrustesConfig::default()).unwrap();
        assert!((fit.s.values() - &s).abs().max() < 1e-6);
        for (a, b) in fit.d.iter().zip(&d) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(fit.iterations, 1);
        assert!(scaled_gram_error(fit.s.values()) < 1e-10);
    }

    #[test]
    fn alternation_never_increases_the_objective() {
        let cfg = ProcrustesConfig { tol: 1e-8, max_iter: 100 };
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = 5 + (seed as usize % 6);
            let r = 1 + (seed as usize % 4);
            let p = 30 + (seed as usize % 20);
            let j = gaussian(&mut rng, n, r) * gaussian(&mut rng, r, p) + gaussian(&mut rng, n, p) * 0.5;
            let m = unit_cols(gaussian(&mut rng, n, r));
            let d0: Vec<f64> = gaussian(&mut rng, r, 1).iter().copied().collect();
            let fit = procrustes_refit(&j, &m, &d0, &cfg).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "seed {seed}: {} -> {}", w[0], w[1]);
            }
            assert!(scaled_gram_error(fit.s.values()) < 1e-8);
        }
    }

    #[test]
    fn procrustes_step_beats_sampled_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, p, r) = (6, 20, 2);
        let j = gaussian(&mut rng, n, p);
        let m = unit_cols(gaussian(&mut rng, n, r));
        let d = [1.2, 0.8];
        let s = procrustes_components(&j, m.values(), &d).unwrap();
        let best = refit_objective(&j, m.values(), &d, &s);
        for _ in 0..2000 {
            let cand = orthogonal_rows(&mut rng, r, p);
            assert!(refit_objective(&j, m.values(), &d, &cand) >= best - 1e-9);
        }
    }

    #[test]
    fn diagonal_update_zeroes_the_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, p, r) = (7, 25, 3);
        let j = gaussian(&mut rng, n, p);
        let m = unit_cols(gaussian(&mut rng, n, r));
        let s = orthogonal_rows(&mut rng, r, p);
        let d = diagonal_update(&j, m.values(), &s);
        let h = 1e-5;
        for l in 0..r {
            let mut up = d.clone();
            let mut dn = d.clone();
            up[l] += h;
            dn[l] -= h;
            let g = (refit_objective(&j, m.values(), &up, &s) - refit_objective(&j, m.values(), &dn, &s)) / (2.0 * h);
            assert!(g.abs() < 1e-5, "component {l}: {g}");
        }
    }

    /// Profile objective with S optimized out:
    /// `‖Ĵ‖² − 2√p ‖ĴᵀMD‖_* + p‖d‖²`.
    fn profile(j: &DMatrix<f64>, m: &DMatrix<f64>, d: &[f64]) -> f64 {
        let p = j.ncols() as f64;
        let mut md = m.clone();
        for (mut c, &dl) in md.column_iter_mut().zip(d) {
            c *= dl;
        }
        let nuclear: f64 = (j.transpose() * md).singular_values().iter().sum();
        frobenius_sq(j) - 2.0 * p.sqrt() * nuclear + p * d.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn alternation_matches_grid_search_on_toy_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (n, p) = (6, 20);
        let s_true = orthogonal_rows(&mut rng, 2, p);
        let m_true = gaussian(&mut rng, n, 2);
        let j = scaled_product(&m_true, &[1.0, 0.6], &s_true) + gaussian(&mut rng, n, p) * 0.2;
        let m = unit_cols(m_true + gaussian(&mut rng, n, 2) * 0.3);

        // coarse grid over D, then zoom
        let (mut c0, mut c1, mut half) = (0.0, 0.0, 4.0);
        for _ in 0..30 {
            let mut best = (f64::INFINITY, c0, c1);
            let steps = 40;
            for a in 0..=steps {
                for b in 0..=steps {
                    let d0 = c0 - half + 2.0 * half * a as f64 / steps as f64;
                    let d1 = c1 - half + 2.0 * half * b as f64 / steps as f64;
                    let f = profile(&j, m.values(), &[d0, d1]);
                    if f < best.0 {
                        best = (f, d0, d1);
                    }
                }
            }
            c0 = best.1;
            c1 = best.2;
            half *= 0.25;
        }
        let grid_best = profile(&j, m.values(), &[c0, c1]);

        let cfg = ProcrustesConfig { tol: 1e-12, max_iter: 10_000 };
        let fit = procrustes_refit(&j, &m, &[1.0, 1.0], &cfg).unwrap();
        let f = refit_objective(&j, m.values(), &fit.d, fit.s.values());
        assert!((f - grid_best).abs() < 1e-4, "alternation {f} vs grid {grid_best}");
        assert!((fit.d[0].abs() - c0.abs()).abs() < 1e-3);
        assert!((fit.d[1].abs() - c1.abs()).abs() < 1e-3);
    }

    #[test]
    fn refit_rejects_bad_input() {
        let m = unit_cols(DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]));
        let j = DMatrix::from_element(3, 5, 1.0);
        assert!(procrustes_refit(&j, &m, &[1.0, 2.0], &ProcrustesConfig::default()).is_err());
        assert!(procrustes_refit(&j, &m, &[0.0], &ProcrustesConfig::default()).is_err());
        let bad = ProcrustesConfig { tol: 0.0, max_iter: 10 };
        assert!(procrustes_refit(&j, &m, &[1.0], &bad).is_err());
    }
}
