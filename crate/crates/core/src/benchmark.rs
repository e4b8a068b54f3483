//! Simulation study harness: every estimation scheme on Setting-1 data
//! across the crossed SNR design, scored against the generating truth.

use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaged::{fit_sing_averaged, ProcrustesConfig};
use crate::baselines::{joint_ica, mcca_jica};
use crate::contrast::ContrastConfig;
use crate::error::{Result, SingError};
use crate::lngca::{derive_seed, fit_lngca, fit_saturated, LngcaFit, MultiStartConfig};
use crate::matching::{joint_rank_test, MatchResult};
use crate::metrics::{mse_joint, pmse, pmse_mixing};
use crate::preprocess::{double_center, whiten, WhitenedData};
use crate::simulate::{
    setting1_components, setting1_generate_from, setting1_sparse_components, Setting1Components, SimulationTruth, DEFAULT_SUBJECTS,
    SNR_HIGH as HIGH_SNR, SNR_LOW as LOW_SNR,
};
use crate::sing::{fit_sing, init_from_separate, separate_as_joint, JointFit, SingConfig, SingInit};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    JointIca,
    MccaJica,
    SingRho0,
    SingSmall,
    SingMedium,
    SingLarge,
    SingAveraged,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::JointIca,
        Scheme::MccaJica,
        Scheme::SingRho0,
        Scheme::SingSmall,
        Scheme::SingMedium,
        Scheme::SingLarge,
        Scheme::SingAveraged,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::JointIca => "jointica",
            Scheme::MccaJica => "mcca-jica",
            Scheme::SingRho0 => "sing-rho0",
            Scheme::SingSmall => "sing-small",
            Scheme::SingMedium => "sing-medium",
            Scheme::SingLarge => "sing-large",
            Scheme::SingAveraged => "sing-averaged",
        }
    }

    /// Multiple of `ρ̂` for the penalized fits.
    pub fn rho_multiplier(&self) -> Option<f64> {
        match self {
            Scheme::SingRho0 => Some(0.0),
            Scheme::SingSmall => Some(0.1),
            Scheme::SingMedium => Some(1.0),
            Scheme::SingLarge => Some(20.0),
            _ => None,
        }
    }

    /// Comma-separated names; `sing` expands to the four penalized fits,
    /// `all` to every scheme. Order follows [`Scheme::ALL`].
    pub fn parse_list(s: &str) -> Result<Vec<Scheme>> {
        let mut out = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "all" => out.extend(Scheme::ALL),
                "sing" => out.extend([Scheme::SingRho0, Scheme::SingSmall, Scheme::SingMedium, Scheme::SingLarge]),
                other => out.push(other.parse()?),
            }
        }
        if out.is_empty() {
            return Err(SingError::InvalidConfig("empty method list".into()));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl FromStr for Scheme {
    type Err = SingError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "jointica" | "joint-ica" => Scheme::JointIca,
            "mcca" | "mcca-jica" => Scheme::MccaJica,
            "sing-rho0" | "separate" => Scheme::SingRho0,
            "sing-small" => Scheme::SingSmall,
            "sing-medium" => Scheme::SingMedium,
            "sing-large" => Scheme::SingLarge,
            "sing-avg" | "sing-averaged" => Scheme::SingAveraged,
            other => return Err(SingError::InvalidConfig(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub snr_x: f64,
    pub snr_y: f64,
}

impl Regime {
    pub const LOW_LOW: Regime = Regime { snr_x: LOW_SNR, snr_y: LOW_SNR };
    pub const LOW_HIGH: Regime = Regime { snr_x: LOW_SNR, snr_y: HIGH_SNR };
    pub const HIGH_LOW: Regime = Regime { snr_x: HIGH_SNR, snr_y: LOW_SNR };
    pub const HIGH_HIGH: Regime = Regime { snr_x: HIGH_SNR, snr_y: HIGH_SNR };
    pub const CROSSED: [Regime; 4] = [Regime::LOW_LOW, Regime::LOW_HIGH, Regime::HIGH_LOW, Regime::HIGH_HIGH];

    pub fn label(&self) -> String {
        let lvl = |s: f64| {
            if s == LOW_SNR {
                "low".to_string()
            } else if s == HIGH_SNR {
                "high".to_string()
            } else {
                format!("{s}")
            }
        };
        format!("{}/{}", lvl(self.snr_x), lvl(self.snr_y))
    }
}

/// √PMSE of the joint blocks and √MSE of the joint signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetrics {
    pub s_jx: f64,
    pub s_jy: f64,
    pub m_jx: f64,
    pub m_jy: f64,
    pub j_x: f64,
    pub j_y: f64,
}

impl SchemeMetrics {
    pub const NAMES: [&'static str; 6] = ["S_Jx", "S_Jy", "M_Jx", "M_Jy", "J_x", "J_y"];

    pub fn values(&self) -> [f64; 6] {
        [self.s_jx, self.s_jy, self.m_jx, self.m_jy, self.j_x, self.j_y]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

/// One scheme's outcome in one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub metrics: SchemeMetrics,
    pub rho: Option<f64>,
    pub converged: bool,
    /// Smallest |correlation| between matched X and Y joint score columns.
    pub min_score_correlation: f64,
    /// Penalized fits only: every accepted step strictly decreased the objective.
    pub monotone: Option<bool>,
    /// Penalized fits only: worst `‖UUᵀ − I‖_F` after an accepted step.
    pub max_orthogonality_error: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub regime: Regime,
    pub rep: usize,
    pub seed: u64,
    pub rho_hat: f64,
    pub outcomes: Vec<SchemeOutcome>,
}

impl ReplicateResult {
    pub fn outcome(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.scheme == scheme)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub reps: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub regimes: Vec<Regime>,
    /// Random starts for the separate fits and both baselines.
    pub restarts: usize,
    pub lngca_max_iter: usize,
    pub sing: SingConfig,
    pub procrustes: ProcrustesConfig,
    pub contrast: ContrastConfig,
    pub subjects: usize,
    pub r_x: usize,
    pub r_y: usize,
    pub r_j: usize,
    /// Threshold for sparsified components; dense fixtures when `None`.
    pub sparse_threshold: Option<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            seed: 1,
            schemes: Scheme::ALL.to_vec(),
            regimes: Regime::CROSSED.to_vec(),
            restarts: 20,
            lngca_max_iter: MultiStartConfig::default().max_iter,
            sing: SingConfig::default(),
            procrustes: ProcrustesConfig::default(),
            contrast: ContrastConfig::default(),
            subjects: DEFAULT_SUBJECTS,
            r_x: 3,
            r_y: 4,
            r_j: 2,
            sparse_threshold: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(SingError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.schemes.is_empty() || self.regimes.is_empty() {
            return Err(SingError::InvalidConfig("no schemes or regimes selected".into()));
        }
        if self.restarts == 0 {
            return Err(SingError::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.r_j == 0 || self.r_j > self.r_x.min(self.r_y) {
            return Err(SingError::InvalidConfig("r_J must be between 1 and min(r_x, r_y)".into()));
        }
        self.sing.validate()?;
        self.procrustes.validate()?;
        self.contrast.validate()
    }

    fn fit_cfg(&self, seed: u64) -> MultiStartConfig {
        MultiStartConfig::from_seed(seed, self.restarts).with_max_iter(self.lngca_max_iter)
    }

    pub(crate) fn components(&self) -> Result<Setting1Components> {
        match self.sparse_threshold {
            None => setting1_components(),
            Some(t) => Ok(setting1_sparse_components(t)?.0),
        }
    }

    /// Seed of replicate `rep` in regime `k`.
    pub fn replicate_seed(&self, k: usize, rep: usize) -> u64 {
        derive_seed(self.seed, (k as u64) << 32 | rep as u64)
    }
}

/// Truth used for scoring: double centering removes the score means and
/// the loading means, so estimates are compared with the centered truth.
pub struct ScoringTruth {
    pub m_j: DMatrix<f64>,
    pub s_jx: DMatrix<f64>,
    pub s_jy: DMatrix<f64>,
    pub j_x: DMatrix<f64>,
    pub j_y: DMatrix<f64>,
}

impl ScoringTruth {
    pub fn from_simulation(t: &SimulationTruth) -> Self {
        Self {
            m_j: t.m_j_centered(),
            s_jx: crate::linalg::center_rows(&t.s_jx),
            s_jy: crate::linalg::center_rows(&t.s_jy),
            j_x: t.joint_x_centered(),
            j_y: t.joint_y_centered(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn score(
        &self,
        s_jx: &DMatrix<f64>,
        s_jy: &DMatrix<f64>,
        m_jx: &DMatrix<f64>,
        m_jy: &DMatrix<f64>,
        j_x: &DMatrix<f64>,
        j_y: &DMatrix<f64>,
    ) -> Result<SchemeMetrics> {
        Ok(SchemeMetrics {
            s_jx: pmse(&self.s_jx, s_jx)?.root(),
            s_jy: pmse(&self.s_jy, s_jy)?.root(),
            m_jx: pmse_mixing(&self.m_j, m_jx)?.root(),
            m_jy: pmse_mixing(&self.m_j, m_jy)?.root(),
            j_x: mse_joint(&self.j_x, j_x)?,
            j_y: mse_joint(&self.j_y, j_y)?,
        })
    }
}

fn abs_cos_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| (x.dot(&y) / (x.norm() * y.norm())).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Matched-column |correlation| between two score matrices (columns are
/// mean-centered first).
pub fn min_matched_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    abs_cos_columns(&crate::linalg::center_columns(a), &crate::linalg::center_columns(b))
}

fn strictly_decreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] < w[0])
}

fn sing_outcome(scheme: Scheme, fit: &JointFit, truth: &ScoringTruth) -> Result<SchemeOutcome> {
    let metrics = truth.score(
        fit.s_jx.values(),
        fit.s_jy.values(),
        fit.m_jx.values(),
        fit.m_jy.values(),
        &fit.j_x(),
        &fit.j_y(),
    )?;
    Ok(SchemeOutcome {
        scheme,
        metrics,
        rho: Some(fit.rho),
        converged: fit.converged,
        min_score_correlation: min_matched_correlation(fit.m_jx.values(), fit.m_jy.values()),
        monotone: Some(strictly_decreasing(&fit.objective_trace)),
        max_orthogonality_error: Some(fit.max_orthogonality_error),
        iterations: fit.iterations,
    })
}

/// Whitened datasets and separate fits shared by all SING variants.
pub struct SeparateStage {
    pub wx: WhitenedData,
    pub wy: WhitenedData,
    pub fit_x: LngcaFit,
    pub fit_y: LngcaFit,
    pub init: SingInit,
    pub rho_hat: f64,
}

pub fn separate_stage(t: &SimulationTruth, cfg: &BenchmarkConfig, seed: u64) -> Result<SeparateStage> {
    let xc = double_center(&t.x)?;
    let yc = double_center(&t.y)?;
    let wx = whiten(&xc, RANK_TOL)?;
    let wy = whiten(&yc, RANK_TOL)?;
    let fit_x = fit_lngca(&wx, cfg.r_x, &cfg.fit_cfg(derive_seed(seed, 1)), &cfg.contrast)?;
    let fit_y = fit_lngca(&wy, cfg.r_y, &cfg.fit_cfg(derive_seed(seed, 2)), &cfg.contrast)?;
    let init = init_from_separate(&fit_x, &fit_y, cfg.r_j)?;
    let rho_hat = init.jb_joint.iter().sum();
    Ok(SeparateStage { wx, wy, fit_x, fit_y, init, rho_hat })
}

/// Fits every configured scheme on one simulated pair.
pub fn run_replicate(t: &SimulationTruth, cfg: &BenchmarkConfig, regime: Regime, rep: usize, seed: u64) -> Result<ReplicateResult> {
    let truth = ScoringTruth::from_simulation(t);
    let needs_separate = cfg.schemes.iter().any(|s| s.rho_multiplier().is_some() || *s == Scheme::SingAveraged);
    let stage = if needs_separate { Some(separate_stage(t, cfg, seed)?) } else { None };
    let mut outcomes = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let outcome = match scheme {
            Scheme::JointIca => {
                let xc = double_center(&t.x)?;
                let yc = double_center(&t.y)?;
                let fit = joint_ica(xc.values(), yc.values(), cfg.r_j, &cfg.fit_cfg(derive_seed(seed, 3)), &cfg.contrast)?;
                let m = fit.scores.values();
                SchemeOutcome {
                    scheme,
                    metrics: truth.score(&fit.loadings_x, &fit.loadings_y, m, m, &fit.j_x(), &fit.j_y())?,
                    rho: None,
                    converged: fit.converged,
                    min_score_correlation: 1.0,
                    monotone: None,
                    max_orthogonality_error: None,
                    iterations: 0,
                }
            }
            Scheme::MccaJica => {
                let xc = double_center(&t.x)?;
                let yc = double_center(&t.y)?;
                let fit = mcca_jica(
                    xc.values(),
                    yc.values(),
                    cfg.r_x,
                    cfg.r_y,
                    cfg.r_j,
                    &cfg.fit_cfg(derive_seed(seed, 4)),
                    &cfg.contrast,
                )?;
                let (mx, my) = (fit.scores_x.values(), fit.scores_y.values());
                SchemeOutcome {
                    scheme,
                    metrics: truth.score(&fit.loadings_x, &fit.loadings_y, mx, my, &fit.j_x(), &fit.j_y())?,
                    rho: None,
                    converged: fit.converged,
                    min_score_correlation: min_matched_correlation(mx, my),
                    monotone: None,
                    max_orthogonality_error: None,
                    iterations: 0,
                }
            }
            Scheme::SingAveraged => {
                let st = stage.as_ref().expect("separate stage computed");
                let fit = fit_sing_averaged(&st.fit_x, &st.fit_y, &st.init.matching, cfg.r_j, &cfg.procrustes)?;
                let m = fit.m_j.values();
                SchemeOutcome {
                    scheme,
                    metrics: truth.score(fit.s_jx.values(), fit.s_jy.values(), m, m, &fit.j_x(), &fit.j_y())?,
                    rho: None,
                    converged: fit.converged,
                    min_score_correlation: 1.0,
                    monotone: None,
                    max_orthogonality_error: None,
                    iterations: fit.procrustes_iterations.0.max(fit.procrustes_iterations.1),
                }
            }
            _ => {
                let st = stage.as_ref().expect("separate stage computed");
                let mult = scheme.rho_multiplier().expect("penalized scheme");
                let fit = if mult == 0.0 {
                    separate_as_joint(&st.wx, &st.wy, &st.init.u_x, &st.init.u_y, cfg.r_j, &cfg.contrast)?
                } else {
                    let mut sc = cfg.sing.clone();
                    sc.rho = mult * st.rho_hat;
                    fit_sing(&st.wx, &st.wy, &st.init.u_x, &st.init.u_y, cfg.r_j, &sc, &cfg.contrast)?
                };
                sing_outcome(scheme, &fit, &truth)?
            }
        };
        log::debug!("{} rep {rep} {}: {:?}", regime.label(), scheme.name(), outcome.metrics);
        outcomes.push(outcome);
    }
    Ok(ReplicateResult {
        regime,
        rep,
        seed,
        rho_hat: stage.as_ref().map_or(f64::NAN, |s| s.rho_hat),
        outcomes,
    })
}

/// All regimes × replicates, in that order. Replicates run in parallel.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<ReplicateResult>> {
    cfg.validate()?;
    let comp = cfg.components()?;
    let jobs: Vec<(usize, Regime, usize)> = cfg
        .regimes
        .iter()
        .enumerate()
        .flat_map(|(k, &g)| (0..cfg.reps).map(move |rep| (k, g, rep)))
        .collect();
    jobs.par_iter()
        .map(|&(k, regime, rep)| {
            let seed = cfg.replicate_seed(k, rep);
            let t = setting1_generate_from(&comp, regime.snr_x, regime.snr_y, seed, cfg.subjects)?;
            run_replicate(&t, cfg, regime, rep, seed)
        })
        .collect()
}

/// Saturated separate fits on both datasets followed by the joint-rank
/// permutation test.
pub fn joint_rank_replicate(t: &SimulationTruth, fit_cfg: &MultiStartConfig, permutations: usize, alpha: f64, seed: u64, contrast: &ContrastConfig) -> Result<MatchResult> {
    let wx = whiten(&double_center(&t.x)?, RANK_TOL)?;
    let wy = whiten(&double_center(&t.y)?, RANK_TOL)?;
    let mut cx = fit_cfg.clone();
    cx.seeds = cx.seeds.iter().map(|&s| derive_seed(s, seed)).collect();
    let mut cy = cx.clone();
    cy.seeds = cy.seeds.iter().map(|&s| derive_seed(s, 1)).collect();
    let fx = fit_saturated(&wx, &cx, contrast)?;
    let fy = fit_saturated(&wy, &cy, contrast)?;
    joint_rank_test(fx.m.values(), fy.m.values(), permutations, alpha, derive_seed(seed, 2))
}

/// One row per scheme × replicate × metric.
pub fn write_long_csv(path: &Path, results: &[ReplicateResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "regime", "snr_x", "snr_y", "rep", "seed", "metric", "value"])?;
    for r in results {
        for o in &r.outcomes {
            for (name, v) in SchemeMetrics::NAMES.iter().zip(o.metrics.values()) {
                w.write_record([
                    o.scheme.name().to_string(),
                    r.regime.label(),
                    r.regime.snr_x.to_string(),
                    r.regime.snr_y.to_string(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    name.to_string(),
                    format!("{v:.10}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Median of the non-NaN entries.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Values of one metric for one scheme in one regime, in replicate order.
pub fn collect_metric(results: &[ReplicateResult], regime: Regime, scheme: Scheme, metric: &str) -> Vec<f64> {
    results
        .iter()
        .filter(|r| r.regime == regime)
        .filter_map(|r| r.outcome(scheme).and_then(|o| o.metrics.get(metric)))
        .collect()
}

/// One-sided exact sign test of `H1: a tends to exceed b`; ties dropped.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> f64 {
    let mut plus = 0u64;
    let mut n = 0u64;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            plus += 1;
            n += 1;
        } else if x < y {
            n += 1;
        }
    }
    if n == 0 {
        return 1.0;
    }
    // P(Binom(n, 1/2) ≥ plus)
    let mut tail = 0.0;
    let mut coef = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            coef *= (n - k + 1) as f64 / k as f64;
        }
        if k >= plus {
            tail += coef;
        }
    }
    tail / 2f64.powi(n as i32)
}
