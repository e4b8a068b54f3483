//! Single-dataset LNGCA: maximize the summed JB contrast of `r` orthogonal
//! directions of whitened data.
//!
//! The search runs in the coordinates of the retained whitening eigenbasis,
//! `Xr = Vᵀ Xw`, so that the unmixing matrix is `U = W Vᵀ` with `W Wᵀ = I`.
//! Each iteration takes a Newton-type fixed-point step per row followed by
//! symmetric decorrelation. When that step would lower the objective, a
//! backtracking Cayley ascent step is used instead, which keeps the objective
//! non-decreasing.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{column_terms, ContrastConfig};
use crate::data_model::{ComponentMatrix, MixingMatrix, UnmixingMatrix};
use crate::error::{Result, SingError};
use crate::linalg;
use crate::preprocess::WhitenedData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartConfig {
    /// One restart per seed.
    pub seeds: Vec<u64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MultiStartConfig {
    fn default() -> Self {
        Self::from_seed(0, 20)
    }
}

impl MultiStartConfig {
    /// `n_restarts` seeds derived from `base`.
    pub fn from_seed(base: u64, n_restarts: usize) -> Self {
        let seeds = (0..n_restarts as u64).map(|i| derive_seed(base, i)).collect();
        Self { seeds, max_iter: 500, tol: 1e-6 }
    }

    pub fn n_restarts(&self) -> usize {
        self.seeds.len()
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(SingError::InvalidConfig("at least one restart is required".into()));
        }
        if self.max_iter == 0 {
            return Err(SingError::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(SingError::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

/// SplitMix64 step, used to derive independent stream seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct LngcaFit {
    pub u: UnmixingMatrix,
    pub m: MixingMatrix,
    pub s: ComponentMatrix,
    /// Descending.
    pub jb_values: Vec<f64>,
    pub objective: f64,
    pub restarts_used: usize,
    pub best_seed: u64,
    pub iterations: usize,
    pub converged: bool,
}

impl LngcaFit {
    pub fn r(&self) -> usize {
        self.jb_values.len()
    }
}

/// Change between successive iterates: rows scaled to mean-square one,
/// compared row by row up to sign.
pub(crate) fn iterate_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let r = a.nrows();
    let mut acc = 0.0;
    for i in 0..r {
        let ra = a.row(i);
        let rb = b.row(i);
        let na = ra.norm();
        let nb = rb.norm();
        let c = (ra.dot(&rb) / (na * nb)).abs().min(1.0);
        acc += 2.0 - 2.0 * c;
    }
    (acc / r as f64).max(0.0).sqrt()
}

struct Engine<'a> {
    xr: &'a DMatrix<f64>,
    xr_t: &'a DMatrix<f64>,
    alpha: f64,
}

struct Eval {
    objective: f64,
    /// `k × r` mean-normalized gradient of the summed contrast.
    grad: DMatrix<f64>,
    kappa: Vec<f64>,
}

impl Engine<'_> {
    fn p(&self) -> f64 {
        self.xr.ncols() as f64
    }

    fn objective(&self, w: &DMatrix<f64>) -> f64 {
        let st = self.xr_t * w.transpose();
        column_terms(&st, self.alpha, false).jb.iter().sum()
    }

    fn eval(&self, w: &DMatrix<f64>) -> Eval {
        let st = self.xr_t * w.transpose();
        let t = column_terms(&st, self.alpha, true);
        let grad = (self.xr * &t.h) / self.p();
        Eval { objective: t.jb.iter().sum(), grad, kappa: t.kappa }
    }

    /// Fixed-point candidate: `T_l = ∇_l − 24(1−α) κ_l w_l`, then `(TTᵀ)^{-1/2} T`.
    fn fixed_point_step(&self, w: &DMatrix<f64>, ev: &Eval) -> Option<DMatrix<f64>> {
        let mut t = ev.grad.transpose();
        for l in 0..t.nrows() {
            let c = 24.0 * (1.0 - self.alpha) * ev.kappa[l];
            let wl = w.row(l);
            let mut tl = t.row_mut(l);
            tl -= wl * c;
        }
        linalg::orthonormalize_rows(&t).ok()
    }

    /// Backtracking Cayley ascent from `w`; `None` if no step improves.
    /// `tau` carries the last accepted step between calls.
    fn ascent_step(&self, w: &DMatrix<f64>, ev: &Eval, tau: &mut f64) -> Option<(DMatrix<f64>, f64)> {
        let g_min = -&ev.grad;
        let skew = linalg::skew_generator(w, &g_min);
        let scale = skew.norm();
        if !(scale > 1e-14) {
            return None;
        }
        let mut t = if *tau > 0.0 { (*tau * 2.0).min(1.0 / scale) } else { 1.0 / scale };
        for _ in 0..40 {
            if let Ok(cand) = linalg::cayley_update(w, &skew, t) {
                let f = self.objective(&cand);
                if f > ev.objective {
                    *tau = t;
                    return Some((cand, f));
                }
            }
            t *= 0.5;
        }
        None
    }
}

struct RestartResult {
    w: DMatrix<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    fallbacks: usize,
}

fn run_restart(engine: &Engine, r: usize, seed: u64, max_iter: usize, tol: f64) -> Result<RestartResult> {
    let k = engine.xr.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(r, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = linalg::orthonormalize_rows(&raw)?;
    let mut ev = engine.eval(&w);
    let mut fallbacks = 0;
    let mut tau = 0.0;
    for it in 1..=max_iter {
        let next = match engine.fixed_point_step(&w, &ev) {
            Some(cand) => {
                let cand_ev = engine.eval(&cand);
                if cand_ev.objective >= ev.objective {
                    Some((cand, cand_ev))
                } else {
                    None
                }
            }
            None => None,
        };
        let (w_new, ev_new) = match next {
            Some(pair) => pair,
            None => match engine.ascent_step(&w, &ev, &mut tau) {
                Some((cand, _)) => {
                    fallbacks += 1;
                    let cand_ev = engine.eval(&cand);
                    (cand, cand_ev)
                }
                None => {
                    return Ok(RestartResult { w, objective: ev.objective, iterations: it, converged: true, fallbacks });
                }
            },
        };
        let change = iterate_change(&w, &w_new);
        w = w_new;
        ev = ev_new;
        if change < tol {
            return Ok(RestartResult { w, objective: ev.objective, iterations: it, converged: true, fallbacks });
        }
    }
    Ok(RestartResult { w, objective: ev.objective, iterations: max_iter, converged: false, fallbacks })
}

/// Converts a reduced-coordinate solution into a fit with rows ordered by
/// descending JB and signs giving non-negative skewness.
fn assemble(
    xw: &WhitenedData,
    xr: &DMatrix<f64>,
    w: &DMatrix<f64>,
    alpha: f64,
    restarts_used: usize,
    best_seed: u64,
    iterations: usize,
    converged: bool,
) -> LngcaFit {
    let s_raw = w * xr;
    let st = s_raw.transpose();
    let terms = column_terms(&st, alpha, false);
    let mut order: Vec<usize> = (0..w.nrows()).collect();
    order.sort_by(|&a, &b| terms.jb[b].total_cmp(&terms.jb[a]).then(a.cmp(&b)));
    let mut w_sorted = w.select_rows(&order);
    for (dst, &src) in order.iter().enumerate() {
        if terms.gamma[src] < 0.0 {
            w_sorted.row_mut(dst).neg_mut();
        }
    }
    let u = &w_sorted * xw.basis().transpose();
    let s = &w_sorted * xr;
    let m = xw.l_inv() * u.transpose();
    let jb_values: Vec<f64> = order.iter().map(|&i| terms.jb[i]).collect();
    let objective = jb_values.iter().sum();
    LngcaFit {
        u: UnmixingMatrix::trusted(u),
        m: MixingMatrix::trusted(m, false),
        s: ComponentMatrix::trusted(s),
        jb_values,
        objective,
        restarts_used,
        best_seed,
        iterations,
        converged,
    }
}

fn check_rank(xw: &WhitenedData, r: usize) -> Result<()> {
    if r == 0 || r > xw.retained_rank() {
        return Err(SingError::InvalidInput(format!(
            "requested {r} components but the whitened data has rank {}",
            xw.retained_rank()
        )));
    }
    Ok(())
}

fn run_restarts(xr: &DMatrix<f64>, r: usize, cfg: &MultiStartConfig, alpha: f64) -> Result<Vec<RestartResult>> {
    let xr_t = xr.transpose();
    let engine = Engine { xr, xr_t: &xr_t, alpha };
    let runs: Vec<Result<RestartResult>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_restart(&engine, r, seed, cfg.max_iter, cfg.tol))
        .collect();
    let runs: Vec<RestartResult> = runs.into_iter().collect::<Result<_>>()?;
    for (res, seed) in runs.iter().zip(&cfg.seeds) {
        log::debug!("restart seed {seed}: {} iterations, {} ascent fallbacks", res.iterations, res.fallbacks);
    }
    Ok(runs)
}

/// Best rotation of already whitened coordinates `xr` (`k × p`, rows with
/// identity covariance): `r × k` with orthonormal rows, rows unsorted.
pub(crate) struct ReducedFit {
    pub w: DMatrix<f64>,
    pub objective: f64,
    pub converged: bool,
}

pub(crate) fn fit_reduced(xr: &DMatrix<f64>, r: usize, cfg: &MultiStartConfig, contrast: &ContrastConfig) -> Result<ReducedFit> {
    if r == 0 || r > xr.nrows() {
        return Err(SingError::InvalidInput(format!("requested {r} components from {} whitened rows", xr.nrows())));
    }
    cfg.validate()?;
    contrast.validate()?;
    let runs = run_restarts(xr, r, cfg, contrast.alpha)?;
    let mut best = 0;
    for (i, res) in runs.iter().enumerate().skip(1) {
        if res.objective > runs[best].objective {
            best = i;
        }
    }
    let res = runs.into_iter().nth(best).expect("non-empty restarts");
    Ok(ReducedFit { w: res.w, objective: res.objective, converged: res.converged })
}

/// Every restart as its own fit, in seed order.
pub fn fit_lngca_restarts(xw: &WhitenedData, r: usize, cfg: &MultiStartConfig, contrast: &ContrastConfig) -> Result<Vec<LngcaFit>> {
    check_rank(xw, r)?;
    cfg.validate()?;
    contrast.validate()?;
    let xr = xw.reduced();
    let runs = run_restarts(&xr, r, cfg, contrast.alpha)?;
    Ok(runs
        .into_iter()
        .zip(&cfg.seeds)
        .map(|(res, &seed)| assemble(xw, &xr, &res.w, contrast.alpha, 1, seed, res.iterations, res.converged))
        .collect())
}

/// Best of all restarts; ties go to the earliest seed.
pub fn fit_lngca(xw: &WhitenedData, r: usize, cfg: &MultiStartConfig, contrast: &ContrastConfig) -> Result<LngcaFit> {
    let fits = fit_lngca_restarts(xw, r, cfg, contrast)?;
    let n = fits.len();
    let best = argmax_objective(&fits);
    let mut fit = fits.into_iter().nth(best).expect("non-empty restarts");
    fit.restarts_used = n;
    if !fit.converged {
        log::warn!("LNGCA did not converge within {} iterations", cfg.max_iter);
    }
    Ok(fit)
}

/// Index of the largest objective, lowest index on ties.
pub fn argmax_objective(fits: &[LngcaFit]) -> usize {
    let mut best = 0;
    for (i, f) in fits.iter().enumerate().skip(1) {
        if f.objective > fits[best].objective {
            best = i;
        }
    }
    best
}

/// LNGCA with as many components as the data rank.
pub fn fit_saturated(xw: &WhitenedData, cfg: &MultiStartConfig, contrast: &ContrastConfig) -> Result<LngcaFit> {
    fit_lngca(xw, xw.retained_rank(), cfg, contrast)
}

fn abs_corr_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ac = linalg::center_rows(a);
    let bc = linalg::center_rows(b);
    let g = &ac * bc.transpose();
    let sa: Vec<f64> = ac.row_iter().map(|r| r.norm()).collect();
    let sb: Vec<f64> = bc.row_iter().map(|r| r.norm()).collect();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| (g[(i, j)] / (sa[i] * sb[j])).abs())
}

/// Components of the argmax fit that reappear (best absolute correlation
/// above `corr_threshold`) in at least `frac_threshold` of the other fits.
pub fn reliability_filter(fits: &[LngcaFit], argmax_index: usize, corr_threshold: f64, frac_threshold: f64) -> Result<Vec<usize>> {
    if fits.len() < 2 {
        return Err(SingError::InvalidInput("need at least two fits".into()));
    }
    if argmax_index >= fits.len() {
        return Err(SingError::InvalidInput("argmax index out of range".into()));
    }
    for t in [corr_threshold, frac_threshold] {
        if !(t > 0.0 && t <= 1.0) {
            return Err(SingError::InvalidConfig(format!("threshold {t} outside (0, 1]")));
        }
    }
    let best = fits[argmax_index].s.values();
    for f in fits {
        if f.s.p() != best.ncols() {
            return Err(SingError::DimensionMismatch("fits have different feature counts".into()));
        }
    }
    let mut hits = vec![0usize; best.nrows()];
    for (i, f) in fits.iter().enumerate() {
        if i == argmax_index {
            continue;
        }
        let c = abs_corr_rows(best, f.s.values());
        for (l, h) in hits.iter_mut().enumerate() {
            if c.row(l).max() > corr_threshold {
                *h += 1;
            }
        }
    }
    let others = (fits.len() - 1) as f64;
    Ok((0..best.nrows()).filter(|&l| hits[l] as f64 / others >= frac_threshold).collect())
}
