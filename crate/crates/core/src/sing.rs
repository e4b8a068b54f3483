//! Joint fit of two LNGCA models whose leading subject-score columns are
//! pulled together by a chordal-distance penalty.
//!
//! The objective is
//! `−Σ f(u_xl Xw) − Σ f(u_yl Yw) + ρ Σ_{l≤r_J} d(L_x⁻¹u_xl, L_y⁻¹u_yl)`
//! minimized over row-orthonormal `U_x`, `U_y` by a curvilinear search with
//! Cayley updates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contrast::{column_terms, ContrastConfig};
use crate::data_model::{ComponentMatrix, MixingMatrix, UnmixingMatrix};
use crate::error::{Result, SingError};
use crate::linalg;
use crate::lngca::{iterate_change, LngcaFit};
use crate::matching::{greedy_match, Matching};
use crate::preprocess::WhitenedData;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TAU0: f64 = 0.01;
pub const DEFAULT_BACKTRACK: f64 = 0.8;
pub const DEFAULT_MAX_BACKTRACKS: usize = 50;
/// Orthogonality error that triggers re-orthonormalization.
pub const ORTHOGONALITY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateScheme {
    /// Both unmixing matrices move with one shared step size.
    #[default]
    Joint,
    /// `U_x` then `U_y`, each with its own step search.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoRule {
    Explicit(f64),
    /// Sum of the joint components' JB values over ten.
    JbSumOver10,
}

impl RhoRule {
    pub fn resolve(&self, jb_joint: &[f64]) -> Result<f64> {
        match *self {
            RhoRule::Explicit(rho) if rho >= 0.0 && rho.is_finite() => Ok(rho),
            RhoRule::Explicit(rho) => Err(SingError::InvalidConfig(format!("rho must be finite and >= 0, got {rho}"))),
            RhoRule::JbSumOver10 => default_rho(jb_joint),
        }
    }
}

/// `Σ jb / 10`.
pub fn default_rho(jb_joint: &[f64]) -> Result<f64> {
    if jb_joint.is_empty() {
        return Err(SingError::InvalidInput("no joint JB values to derive rho from".into()));
    }
    Ok(jb_joint.iter().sum::<f64>() / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingConfig {
    pub rho: f64,
    /// Stop once the summed iterate change of both unmixing matrices drops below this.
    pub epsilon: f64,
    pub max_iter: usize,
    pub tau0: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub scheme: UpdateScheme,
}

impl Default for SingConfig {
    fn default() -> Self {
        Self {
            rho: 0.0,
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
            tau0: DEFAULT_TAU0,
            backtrack: DEFAULT_BACKTRACK,
            max_backtracks: DEFAULT_MAX_BACKTRACKS,
            scheme: UpdateScheme::Joint,
        }
    }
}

impl SingConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self { rho, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(SingError::InvalidConfig(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(SingError::InvalidConfig(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SingError::InvalidConfig(format!("backtrack must lie in (0, 1), got {}", self.backtrack)));
        }
        if !(self.epsilon > 0.0) {
            return Err(SingError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SingError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    /// No step size within the backtracking budget decreased the objective.
    Stalled,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct JointFit {
    /// Unit-norm joint score columns from the X side.
    pub m_jx: MixingMatrix,
    /// Unit-norm joint score columns from the Y side, signed to agree with `m_jx`.
    pub m_jy: MixingMatrix,
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
    pub s_jx: ComponentMatrix,
    pub s_jy: ComponentMatrix,
    pub m_ix: MixingMatrix,
    pub m_iy: MixingMatrix,
    pub s_ix: ComponentMatrix,
    pub s_iy: ComponentMatrix,
    pub u_x: UnmixingMatrix,
    pub u_y: UnmixingMatrix,
    /// Chordal distances between matched joint score columns.
    pub matched_distances: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub converged: bool,
    /// Largest `‖UUᵀ − I‖_F` seen after an accepted step, before any correction.
    pub max_orthogonality_error: f64,
    pub reorthonormalizations: usize,
}

impl JointFit {
    pub fn r_j(&self) -> usize {
        self.d_x.len()
    }

    /// The X-side estimate of the shared score matrix.
    pub fn m_j(&self) -> &MixingMatrix {
        &self.m_jx
    }

    /// `M_Jx D_x S_Jx`.
    pub fn j_x(&self) -> DMatrix<f64> {
        scaled_product(self.m_jx.values(), &self.d_x, self.s_jx.values())
    }

    /// `M_Jy D_y S_Jy`.
    pub fn j_y(&self) -> DMatrix<f64> {
        scaled_product(self.m_jy.values(), &self.d_y, self.s_jy.values())
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

pub(crate) fn scaled_product(m: &DMatrix<f64>, d: &[f64], s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut md = m.clone();
    for (mut c, &dl) in md.column_iter_mut().zip(d) {
        c *= dl;
    }
    md * s
}

fn unit(v: &DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if !(n > 0.0) {
        return Err(SingError::InvalidInput("zero vector has no direction".into()));
    }
    Ok(v / n)
}

/// Gradient of `ρ·d(B u, a)` with respect to `u`, for unit `a`:
/// `−4ρ c (Bᵀa/‖Bu‖ − c BᵀBu/‖Bu‖²)` with `c = (Bu)ᵀa/‖Bu‖`.
/// With `B = L⁻¹` symmetric this is the usual closed form.
pub fn penalty_gradient(u: &DVector<f64>, a: &DVector<f64>, b: &DMatrix<f64>, rho: f64) -> Result<DVector<f64>> {
    if b.ncols() != u.len() || b.nrows() != a.len() {
        return Err(SingError::DimensionMismatch(format!(
            "map is {}x{}, u has {} entries, a has {}",
            b.nrows(),
            b.ncols(),
            u.len(),
            a.len()
        )));
    }
    let m = b * u;
    let nm = m.norm();
    if !(nm > 0.0) {
        return Err(SingError::InvalidInput("u maps to the zero vector".into()));
    }
    let a = unit(a)?;
    Ok(b.transpose() * penalty_gradient_m(&m, nm, &a) * rho)
}

/// `∂d(m, a)/∂m` for unit `a`.
fn penalty_gradient_m(m: &DVector<f64>, nm: f64, a: &DVector<f64>) -> DVector<f64> {
    let c = m.dot(a) / nm;
    (a - m * (c / nm)) * (-4.0 * c / nm)
}

fn check_pair(ux: &DMatrix<f64>, uy: &DMatrix<f64>, wx: &WhitenedData, wy: &WhitenedData, r_j: usize) -> Result<()> {
    if wx.n() != wy.n() {
        return Err(SingError::DimensionMismatch(format!("{} versus {} subjects", wx.n(), wy.n())));
    }
    if ux.ncols() != wx.n() || uy.ncols() != wy.n() {
        return Err(SingError::DimensionMismatch("unmixing matrices must have one column per subject".into()));
    }
    if r_j > ux.nrows().min(uy.nrows()) {
        return Err(SingError::InvalidInput(format!(
            "r_J = {r_j} exceeds min(r_x, r_y) = {}",
            ux.nrows().min(uy.nrows())
        )));
    }
    Ok(())
}

/// The penalized objective, computed directly from its definition.
pub fn objective(
    ux: &DMatrix<f64>,
    uy: &DMatrix<f64>,
    wx: &WhitenedData,
    wy: &WhitenedData,
    r_j: usize,
    rho: f64,
    contrast: &ContrastConfig,
) -> Result<f64> {
    check_pair(ux, uy, wx, wy, r_j)?;
    let jbx = crate::contrast::jb_rows(&(ux * wx.xw()), contrast);
    let jby = crate::contrast::jb_rows(&(uy * wy.xw()), contrast);
    let mut penalty = 0.0;
    for l in 0..r_j {
        let mx = wx.l_inv() * ux.row(l).transpose();
        let my = wy.l_inv() * uy.row(l).transpose();
        penalty += crate::matching::chordal_distance(mx.as_slice(), my.as_slice())?;
    }
    Ok(-jbx.iter().sum::<f64>() - jby.iter().sum::<f64>() + rho * penalty)
}

/// One Cayley step of both unmixing matrices; `gx`, `gy` are the `n × r`
/// Euclidean gradients of the minimized objective.
pub fn curvilinear_step(
    ux: &DMatrix<f64>,
    uy: &DMatrix<f64>,
    gx: &DMatrix<f64>,
    gy: &DMatrix<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if gx.shape() != (ux.ncols(), ux.nrows()) || gy.shape() != (uy.ncols(), uy.nrows()) {
        return Err(SingError::DimensionMismatch("gradient must be the transpose shape of U".into()));
    }
    let step = |u: &DMatrix<f64>, g: &DMatrix<f64>| linalg::cayley_update(u, &linalg::skew_generator(u, g), tau);
    Ok((step(ux, gx)?, step(uy, gy)?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TauSearch<T> {
    Accepted { tau: f64, h: usize, value: f64, candidate: T },
    Stalled,
}

/// Tries `τ = tau0 · backtrack^h` for `h = 0, 1, …, max_backtracks` and
/// accepts the first candidate whose objective is below `current`.
/// `eval` returns `None` when the candidate cannot be formed.
pub fn select_tau<T>(current: f64, cfg: &SingConfig, mut eval: impl FnMut(f64) -> Option<(T, f64)>) -> TauSearch<T> {
    let mut tau = cfg.tau0;
    for h in 0..=cfg.max_backtracks {
        if let Some((candidate, value)) = eval(tau) {
            if value < current {
                return TauSearch::Accepted { tau, h, value, candidate };
            }
        }
        tau *= cfg.backtrack;
    }
    TauSearch::Stalled
}

/// One dataset in reduced coordinates: `U = W Vᵀ`, `L⁻¹Uᵀ = B Wᵀ` with
/// `B = V Λ^{1/2}`.
struct Side {
    xr: DMatrix<f64>,
    xr_t: DMatrix<f64>,
    b: DMatrix<f64>,
    basis: DMatrix<f64>,
}

impl Side {
    fn new(w: &WhitenedData) -> Self {
        let xr = w.reduced();
        let xr_t = xr.transpose();
        let k = w.retained_rank();
        let mut b = w.basis().clone();
        for (j, mut c) in b.column_iter_mut().enumerate() {
            c *= w.eigenvalues()[j].sqrt();
        }
        debug_assert_eq!(b.ncols(), k);
        Side { xr, xr_t, b, basis: w.basis().clone() }
    }

    fn p(&self) -> f64 {
        self.xr.ncols() as f64
    }
}

/// Current iterate of one side together with its derived quantities.
#[derive(Clone)]
struct SideState {
    /// `r × k`.
    w: DMatrix<f64>,
    /// `p × r` component scores.
    st: DMatrix<f64>,
    /// `n × r_J` leading mixing columns.
    mj: DMatrix<f64>,
    jb_sum: f64,
}

impl SideState {
    fn new(side: &Side, w: DMatrix<f64>, r_j: usize, alpha: f64) -> Self {
        let st = &side.xr_t * w.transpose();
        Self::from_parts(side, w, st, r_j, alpha)
    }

    fn from_parts(side: &Side, w: DMatrix<f64>, st: DMatrix<f64>, r_j: usize, alpha: f64) -> Self {
        let mj = &side.b * w.rows(0, r_j).transpose();
        let jb_sum = column_terms(&st, alpha, false).jb.iter().sum();
        SideState { w, st, mj, jb_sum }
    }
}

fn penalty(mx: &DMatrix<f64>, my: &DMatrix<f64>) -> f64 {
    mx.column_iter()
        .zip(my.column_iter())
        .map(|(a, b)| {
            let c = a.dot(&b) / (a.norm() * b.norm());
            2.0 - 2.0 * c * c
        })
        .sum()
}

/// Low-rank form of the Cayley curve through one iterate:
/// `W(τ) = W − τ Zᵀ Lᵀ`, `Sᵀ(τ) = Sᵀ − τ Q Z`, `Z = (I + τ/2 RᵀL)⁻¹ RᵀX`.
struct Curve {
    lt: DMatrix<f64>,
    rtl: DMatrix<f64>,
    rtx: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl Curve {
    /// `g` is the `k × r` gradient of the minimized objective.
    fn new(side: &Side, state: &SideState, g: &DMatrix<f64>) -> Self {
        let r = state.w.nrows();
        let x = state.w.transpose();
        let k = x.nrows();
        let mut l = DMatrix::zeros(k, 2 * r);
        l.columns_mut(0, r).copy_from(g);
        l.columns_mut(r, r).copy_from(&x);
        let mut rm = DMatrix::zeros(k, 2 * r);
        rm.columns_mut(0, r).copy_from(&x);
        rm.columns_mut(r, r).copy_from(&(-g));
        let rtl = rm.transpose() * &l;
        let rtx = rm.transpose() * &x;
        let mut q = DMatrix::zeros(state.st.nrows(), 2 * r);
        q.columns_mut(0, r).copy_from(&(&side.xr_t * g));
        q.columns_mut(r, r).copy_from(&state.st);
        Curve { lt: l.transpose(), rtl, rtx, q }
    }

    fn point(&self, state: &SideState, tau: f64) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let m2 = self.rtl.nrows();
        let sys = DMatrix::<f64>::identity(m2, m2) + &self.rtl * (0.5 * tau);
        let z = sys.lu().solve(&self.rtx)?;
        let w = &state.w - z.transpose() * &self.lt * tau;
        let st = &state.st - &self.q * &z * tau;
        Some((w, st))
    }
}

struct Problem {
    r_j: usize,
    rho: f64,
    alpha: f64,
}

impl Problem {
    fn value(&self, sx: &SideState, sy: &SideState) -> f64 {
        -sx.jb_sum - sy.jb_sum + self.rho * penalty(&sx.mj, &sy.mj)
    }

    /// `k × r` gradient for `me`, holding `other` fixed.
    fn gradient(&self, side: &Side, me: &SideState, other: &SideState) -> DMatrix<f64> {
        let terms = column_terms(&me.st, self.alpha, true);
        let mut g = -(&side.xr * &terms.h) / side.p();
        if self.rho > 0.0 {
            for l in 0..self.r_j {
                let m = me.mj.column(l).into_owned();
                let nm = m.norm();
                let a = other.mj.column(l).normalize();
                let dm = penalty_gradient_m(&m, nm, &a);
                let mut gl = g.column_mut(l);
                gl += side.b.transpose() * dm * self.rho;
            }
        }
        g
    }

    fn advance(&self, side: &Side, state: &SideState, curve: &Curve, tau: f64) -> Option<SideState> {
        let (w, st) = curve.point(state, tau)?;
        Some(SideState::from_parts(side, w, st, self.r_j, self.alpha))
    }
}

/// Keeps a row-orthonormal iterate on the manifold; returns the error seen.
fn guard_orthogonality(side: &Side, state: &mut SideState, r_j: usize, alpha: f64, count: &mut usize) -> Result<f64> {
    let err = linalg::orthogonality_error(&state.w);
    if err > ORTHOGONALITY_GUARD {
        log::warn!("orthogonality drift {err:.2e}; re-orthonormalizing");
        *state = SideState::new(side, linalg::orthonormalize_rows(&state.w)?, r_j, alpha);
        *count += 1;
    }
    Ok(err)
}

fn to_reduced(u: &DMatrix<f64>, w: &WhitenedData, name: &str) -> Result<DMatrix<f64>> {
    if u.ncols() != w.n() {
        return Err(SingError::DimensionMismatch(format!("{name}: U has {} columns for {} subjects", u.ncols(), w.n())));
    }
    if u.nrows() > w.retained_rank() {
        return Err(SingError::InvalidInput(format!(
            "{name}: {} components exceed the data rank {}",
            u.nrows(),
            w.retained_rank()
        )));
    }
    let reduced = u * w.basis();
    if linalg::orthogonality_error(&reduced) < 1e-10 {
        Ok(reduced)
    } else {
        linalg::orthonormalize_rows(&reduced)
    }
}

/// Runs the curvilinear search from `init_ux`, `init_uy` (rows ordered so
/// that the first `r_j` are paired).
pub fn fit_sing(
    wx: &WhitenedData,
    wy: &WhitenedData,
    init_ux: &DMatrix<f64>,
    init_uy: &DMatrix<f64>,
    r_j: usize,
    cfg: &SingConfig,
    contrast: &ContrastConfig,
) -> Result<JointFit> {
    cfg.validate()?;
    contrast.validate()?;
    check_pair(init_ux, init_uy, wx, wy, r_j)?;
    let alpha = contrast.alpha;
    let x = Side::new(wx);
    let y = Side::new(wy);
    let prob = Problem { r_j, rho: cfg.rho, alpha };
    let mut sx = SideState::new(&x, to_reduced(init_ux, wx, "X")?, r_j, alpha);
    let mut sy = SideState::new(&y, to_reduced(init_uy, wy, "Y")?, r_j, alpha);
    let mut value = prob.value(&sx, &sy);
    let mut trace = vec![value];
    let mut max_orth: f64 = 0.0;
    let mut reorth = 0;
    let mut stop = StopReason::MaxIter;
    let mut iterations = cfg.max_iter;

    for it in 1..=cfg.max_iter {
        let prev_wx = sx.w.clone();
        let prev_wy = sy.w.clone();
        let moved = match cfg.scheme {
            UpdateScheme::Joint => {
                let gx = prob.gradient(&x, &sx, &sy);
                let gy = prob.gradient(&y, &sy, &sx);
                let cx = Curve::new(&x, &sx, &gx);
                let cy = Curve::new(&y, &sy, &gy);
                match select_tau(value, cfg, |tau| {
                    let nx = prob.advance(&x, &sx, &cx, tau)?;
                    let ny = prob.advance(&y, &sy, &cy, tau)?;
                    let v = prob.value(&nx, &ny);
                    Some(((nx, ny), v))
                }) {
                    TauSearch::Accepted { value: v, candidate: (nx, ny), .. } => {
                        sx = nx;
                        sy = ny;
                        value = v;
                        trace.push(v);
                        true
                    }
                    TauSearch::Stalled => false,
                }
            }
            UpdateScheme::Alternating => {
                let mut any = false;
                let gx = prob.gradient(&x, &sx, &sy);
                let cx = Curve::new(&x, &sx, &gx);
                if let TauSearch::Accepted { value: v, candidate, .. } = select_tau(value, cfg, |tau| {
                    let nx = prob.advance(&x, &sx, &cx, tau)?;
                    let v = prob.value(&nx, &sy);
                    Some((nx, v))
                }) {
                    sx = candidate;
                    value = v;
                    trace.push(v);
                    any = true;
                }
                let gy = prob.gradient(&y, &sy, &sx);
                let cy = Curve::new(&y, &sy, &gy);
                if let TauSearch::Accepted { value: v, candidate, .. } = select_tau(value, cfg, |tau| {
                    let ny = prob.advance(&y, &sy, &cy, tau)?;
                    let v = prob.value(&sx, &ny);
                    Some((ny, v))
                }) {
                    sy = candidate;
                    value = v;
                    trace.push(v);
                    any = true;
                }
                any
            }
        };
        if !moved {
            stop = StopReason::Stalled;
            iterations = it;
            break;
        }
        max_orth = max_orth.max(guard_orthogonality(&x, &mut sx, r_j, alpha, &mut reorth)?);
        max_orth = max_orth.max(guard_orthogonality(&y, &mut sy, r_j, alpha, &mut reorth)?);
        if reorth > 0 {
            value = prob.value(&sx, &sy);
        }
        let change = iterate_change(&prev_wx, &sx.w) + iterate_change(&prev_wy, &sy.w);
        if change < cfg.epsilon {
            stop = StopReason::Converged;
            iterations = it;
            break;
        }
    }
    if stop == StopReason::MaxIter {
        log::warn!("SING did not converge within {} iterations", cfg.max_iter);
    }
    log::debug!("SING rho={} stopped after {iterations} iterations ({stop:?})", cfg.rho);

    let u_x = &sx.w * x.basis.transpose();
    let u_y = &sy.w * y.basis.transpose();
    Ok(assemble(wx, wy, u_x, u_y, r_j, cfg.rho, trace, iterations, stop, max_orth, reorth, contrast))
}

/// The `ρ = 0` decomposition taken directly from the matched separate fits,
/// without any search.
pub fn separate_as_joint(
    wx: &WhitenedData,
    wy: &WhitenedData,
    init_ux: &DMatrix<f64>,
    init_uy: &DMatrix<f64>,
    r_j: usize,
    contrast: &ContrastConfig,
) -> Result<JointFit> {
    contrast.validate()?;
    check_pair(init_ux, init_uy, wx, wy, r_j)?;
    let ux = to_reduced(init_ux, wx, "X")? * wx.basis().transpose();
    let uy = to_reduced(init_uy, wy, "Y")? * wy.basis().transpose();
    let value = objective(&ux, &uy, wx, wy, r_j, 0.0, contrast)?;
    let orth = linalg::orthogonality_error(&ux).max(linalg::orthogonality_error(&uy));
    Ok(assemble(wx, wy, ux, uy, r_j, 0.0, vec![value], 0, StopReason::Converged, orth, 0, contrast))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    wx: &WhitenedData,
    wy: &WhitenedData,
    mut u_x: DMatrix<f64>,
    mut u_y: DMatrix<f64>,
    r_j: usize,
    rho: f64,
    objective_trace: Vec<f64>,
    iterations: usize,
    stop_reason: StopReason,
    max_orthogonality_error: f64,
    reorthonormalizations: usize,
    contrast: &ContrastConfig,
) -> JointFit {
    // Orient every component to non-negative skewness.
    for (u, w) in [(&mut u_x, wx), (&mut u_y, wy)] {
        let st = w.xw_t() * u.transpose();
        let terms = column_terms(&st, contrast.alpha, false);
        for (l, g) in terms.gamma.iter().enumerate() {
            if *g < 0.0 {
                u.row_mut(l).neg_mut();
            }
        }
    }
    let s_x = &u_x * wx.xw();
    let s_y = &u_y * wy.xw();
    let m_x = wx.l_inv() * u_x.transpose();
    let m_y = wy.l_inv() * u_y.transpose();
    let rx = u_x.nrows();
    let ry = u_y.nrows();

    let mut m_jx = m_x.columns(0, r_j).into_owned();
    let mut m_jy = m_y.columns(0, r_j).into_owned();
    let mut d_x = Vec::with_capacity(r_j);
    let mut d_y = Vec::with_capacity(r_j);
    let mut matched_distances = Vec::with_capacity(r_j);
    for l in 0..r_j {
        let nx = m_jx.column(l).norm();
        let ny = m_jy.column(l).norm();
        m_jx.column_mut(l).unscale_mut(nx);
        m_jy.column_mut(l).unscale_mut(ny);
        let c = m_jx.column(l).dot(&m_jy.column(l));
        let sign = if c < 0.0 { -1.0 } else { 1.0 };
        m_jy.column_mut(l).scale_mut(sign);
        d_x.push(nx);
        d_y.push(sign * ny);
        matched_distances.push((2.0 - 2.0 * c * c).max(0.0));
    }

    JointFit {
        m_jx: MixingMatrix::trusted(m_jx, true),
        m_jy: MixingMatrix::trusted(m_jy, true),
        d_x,
        d_y,
        s_jx: ComponentMatrix::trusted(s_x.rows(0, r_j).into_owned()),
        s_jy: ComponentMatrix::trusted(s_y.rows(0, r_j).into_owned()),
        m_ix: MixingMatrix::trusted(m_x.columns(r_j, rx - r_j).into_owned(), false),
        m_iy: MixingMatrix::trusted(m_y.columns(r_j, ry - r_j).into_owned(), false),
        s_ix: ComponentMatrix::trusted(s_x.rows(r_j, rx - r_j).into_owned()),
        s_iy: ComponentMatrix::trusted(s_y.rows(r_j, ry - r_j).into_owned()),
        u_x: UnmixingMatrix::trusted(u_x),
        u_y: UnmixingMatrix::trusted(u_y),
        matched_distances,
        objective_trace,
        rho,
        iterations,
        stop_reason,
        converged: stop_reason == StopReason::Converged,
        max_orthogonality_error,
        reorthonormalizations,
    }
}

/// Starting point built from two separate fits: rows reordered so that
/// greedily matched pairs come first.
#[derive(Debug, Clone)]
pub struct SingInit {
    pub u_x: DMatrix<f64>,
    pub u_y: DMatrix<f64>,
    pub matching: Matching,
    /// JB values of the first `r_J` matched components, X then Y.
    pub jb_joint: Vec<f64>,
}

pub fn init_from_separate(fit_x: &LngcaFit, fit_y: &LngcaFit, r_j: usize) -> Result<SingInit> {
    let matching = greedy_match(fit_x.m.values(), fit_y.m.values())?;
    init_with_matching(fit_x, fit_y, matching, r_j)
}

pub fn init_with_matching(fit_x: &LngcaFit, fit_y: &LngcaFit, matching: Matching, r_j: usize) -> Result<SingInit> {
    if r_j > matching.pairs.len() {
        return Err(SingError::InvalidInput(format!("r_J = {r_j} exceeds the {} matched pairs", matching.pairs.len())));
    }
    let ox = matching.x_order(fit_x.r());
    let oy = matching.y_order(fit_y.r());
    let u_x = fit_x.u.values().select_rows(&ox);
    let u_y = fit_y.u.values().select_rows(&oy);
    let mut jb_joint: Vec<f64> = ox[..r_j].iter().map(|&i| fit_x.jb_values[i]).collect();
    jb_joint.extend(oy[..r_j].iter().map(|&i| fit_y.jb_values[i]));
    Ok(SingInit { u_x, u_y, matching, jb_joint })
}
