//! Comparison methods: Joint ICA on concatenated data and mCCA+jICA, both
//! with the same JB contrast as SING.

use nalgebra::{DMatrix, DVector};

use crate::contrast::{column_terms, ContrastConfig};
use crate::data_model::MixingMatrix;
use crate::error::{Result, SingError};
use crate::linalg::{sym_eigen_desc, sym_inv_sqrt};
use crate::lngca::{fit_reduced, MultiStartConfig};

const RANK_TOL: f64 = 1e-10;
const CCA_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct JointIcaFit {
    /// Scores shared by both datasets (`n × r_J`).
    pub scores: MixingMatrix,
    pub loadings_x: DMatrix<f64>,
    pub loadings_y: DMatrix<f64>,
    /// Each dataset was divided by its root mean square before concatenation.
    pub scale_x: f64,
    pub scale_y: f64,
    pub objective: f64,
    pub converged: bool,
}

impl JointIcaFit {
    pub fn j_x(&self) -> DMatrix<f64> {
        self.scores.values() * &self.loadings_x * self.scale_x
    }

    pub fn j_y(&self) -> DMatrix<f64> {
        self.scores.values() * &self.loadings_y * self.scale_y
    }
}

#[derive(Debug, Clone)]
pub struct MccaJicaFit {
    pub scores_x: MixingMatrix,
    pub scores_y: MixingMatrix,
    pub loadings_x: DMatrix<f64>,
    pub loadings_y: DMatrix<f64>,
    /// Leading canonical correlations, non-increasing.
    pub canonical_correlations: Vec<f64>,
    pub scale_x: f64,
    pub scale_y: f64,
    pub objective: f64,
    pub converged: bool,
}

impl MccaJicaFit {
    pub fn j_x(&self) -> DMatrix<f64> {
        self.scores_x.values() * &self.loadings_x * self.scale_x
    }

    pub fn j_y(&self) -> DMatrix<f64> {
        self.scores_y.values() * &self.loadings_y * self.scale_y
    }
}

/// Canonical correlation analysis of the columns of `a` and `b`.
#[derive(Debug, Clone)]
pub struct Cca {
    /// All `min(ka, kb)` correlations, non-increasing.
    pub correlations: Vec<f64>,
    /// Coefficient vectors as columns, scaled so `(A wa)ᵀ(A wa)/n = 1`.
    pub wa: DMatrix<f64>,
    pub wb: DMatrix<f64>,
}

fn root_mean_square(x: &DMatrix<f64>) -> Result<f64> {
    let rms = (x.norm_squared() / x.len() as f64).sqrt();
    if !(rms > 0.0) || !rms.is_finite() {
        return Err(SingError::InvalidInput("dataset is identically zero".into()));
    }
    Ok(rms)
}

/// Leading `r` principal directions of the rows of `x`: eigenvectors `V_r`,
/// eigenvalues of `XXᵀ/p`, and whitened coordinates `Λ_r^{-1/2} V_rᵀ X`.
fn pca(x: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols() as f64;
    let (vals, vecs) = sym_eigen_desc(&(x * x.transpose() / p));
    if r == 0 || r > vals.len() {
        return Err(SingError::InvalidInput(format!("cannot keep {r} of {} principal components", vals.len())));
    }
    if !(vals[r - 1] > RANK_TOL * vals[0].max(1e-300)) {
        return Err(SingError::InvalidInput(format!("requested rank {r} exceeds the data rank")));
    }
    let v = vecs.columns(0, r).into_owned();
    let lam = vals.rows(0, r).into_owned();
    let mut proj = v.transpose();
    for (i, mut row) in proj.row_iter_mut().enumerate() {
        row /= lam[i].sqrt();
    }
    let xr = proj * x;
    Ok((v, lam, xr))
}

fn check_pair(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(SingError::DimensionMismatch(format!("{} subjects in X, {} in Y", x.nrows(), y.nrows())));
    }
    Ok(())
}

/// Flips rows of `s` to non-negative skewness and the matching columns of
/// every score matrix.
fn orient_positive(s: &mut DMatrix<f64>, scores: &mut [&mut DMatrix<f64>], alpha: f64) {
    let terms = column_terms(&s.transpose(), alpha, false);
    for (l, g) in terms.gamma.iter().enumerate() {
        if *g < 0.0 {
            s.row_mut(l).neg_mut();
            for m in scores.iter_mut() {
                m.column_mut(l).neg_mut();
            }
        }
    }
}

/// ICA of the rows of `e` (`k × p`, `k ≥ r`): returns `(W_mix, S)` with
/// `e ≈ W_mix S` on the leading `r` principal directions.
fn rotate(e: &DMatrix<f64>, r: usize, cfg: &MultiStartConfig, contrast: &ContrastConfig) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, bool)> {
    let (v, lam, er) = pca(e, r)?;
    let fit = fit_reduced(&er, r, cfg, contrast)?;
    let s = &fit.w * er;
    let mut vs = v;
    for (i, mut c) in vs.column_iter_mut().enumerate() {
        c *= lam[i].sqrt();
    }
    Ok((vs * fit.w.transpose(), s, fit.objective, fit.converged))
}

/// Joint ICA: both (centered) datasets scaled to unit root mean square,
/// concatenated along features, reduced to `r_j` principal directions and
/// rotated to maximal non-Gaussianity of the loadings.
pub fn joint_ica(x: &DMatrix<f64>, y: &DMatrix<f64>, r_j: usize, cfg: &MultiStartConfig, contrast: &ContrastConfig) -> Result<JointIcaFit> {
    check_pair(x, y)?;
    let (px, py) = (x.ncols(), y.ncols());
    let scale_x = root_mean_square(x)?;
    let scale_y = root_mean_square(y)?;
    let mut z = DMatrix::zeros(x.nrows(), px + py);
    z.columns_mut(0, px).copy_from(&(x / scale_x));
    z.columns_mut(px, py).copy_from(&(y / scale_y));
    let (mut scores, mut s, objective, converged) = rotate(&z, r_j, cfg, contrast)?;
    orient_positive(&mut s, &mut [&mut scores], contrast.alpha);
    Ok(JointIcaFit {
        scores: MixingMatrix::trusted(scores, false),
        loadings_x: s.columns(0, px).into_owned(),
        loadings_y: s.columns(px, py).into_owned(),
        scale_x,
        scale_y,
        objective,
        converged,
    })
}

/// Standard CCA through the SVD of `Caa^{-1/2} Cab Cbb^{-1/2}`, with a small
/// ridge on the within-set covariances.
pub fn cca(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Cca> {
    check_pair(a, b)?;
    let n = a.nrows() as f64;
    let ridge = |c: DMatrix<f64>| {
        let k = c.nrows();
        let lam = CCA_RIDGE * c.trace() / k as f64;
        c + DMatrix::identity(k, k) * lam
    };
    let caa = ridge(a.transpose() * a / n);
    let cbb = ridge(b.transpose() * b / n);
    let cab = a.transpose() * b / n;
    let ia = sym_inv_sqrt(&caa, 0.0);
    let ib = sym_inv_sqrt(&cbb, 0.0);
    let k = &ia * cab * &ib;
    let svd = k.svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let u = svd.u.expect("requested").select_columns(&order);
    let v = svd.v_t.expect("requested").transpose().select_columns(&order);
    let correlations = order.iter().map(|&i| svd.singular_values[i].min(1.0)).collect();
    Ok(Cca { correlations, wa: ia * u, wb: ib * v })
}

/// PCA of each dataset to `r_x`/`r_y`, CCA on the subject-side principal
/// scores, least-squares loadings for the top `r_j` canonical variates, and
/// a joint ICA rotation of the concatenated loadings.
pub fn mcca_jica(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r_x: usize,
    r_y: usize,
    r_j: usize,
    cfg: &MultiStartConfig,
    contrast: &ContrastConfig,
) -> Result<MccaJicaFit> {
    check_pair(x, y)?;
    if r_j == 0 || r_j > r_x.min(r_y) {
        return Err(SingError::InvalidInput(format!("r_J = {r_j} must be between 1 and min(r_x, r_y)")));
    }
    let (px, py) = (x.ncols(), y.ncols());
    let scale_x = root_mean_square(x)?;
    let scale_y = root_mean_square(y)?;
    let xs = x / scale_x;
    let ys = y / scale_y;
    let subject_scores = |v: DMatrix<f64>, lam: &DVector<f64>| {
        let mut f = v;
        for (i, mut c) in f.column_iter_mut().enumerate() {
            c *= lam[i].sqrt();
        }
        f
    };
    let (vx, lx, _) = pca(&xs, r_x)?;
    let (vy, ly, _) = pca(&ys, r_y)?;
    let fx = subject_scores(vx, &lx);
    let fy = subject_scores(vy, &ly);
    let c = cca(&fx, &fy)?;
    let cx = fx * c.wa.columns(0, r_j);
    let cy = fy * c.wb.columns(0, r_j);
    let least_squares = |cv: &DMatrix<f64>, data: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let g = cv.transpose() * cv;
        let chol = g
            .cholesky()
            .ok_or_else(|| SingError::Numerical("canonical variates are collinear".into()))?;
        Ok(chol.solve(&(cv.transpose() * data)))
    };
    let ex = least_squares(&cx, &xs)?;
    let ey = least_squares(&cy, &ys)?;
    let mut e = DMatrix::zeros(r_j, px + py);
    e.columns_mut(0, px).copy_from(&ex);
    e.columns_mut(px, py).copy_from(&ey);
    let (w_mix, mut s, objective, converged) = rotate(&e, r_j, cfg, contrast)?;
    let mut scores_x = cx * &w_mix;
    let mut scores_y = cy * w_mix;
    orient_positive(&mut s, &mut [&mut scores_x, &mut scores_y], contrast.alpha);
    Ok(MccaJicaFit {
        scores_x: MixingMatrix::trusted(scores_x, false),
        scores_y: MixingMatrix::trusted(scores_y, false),
        loadings_x: s.columns(0, px).into_owned(),
        loadings_y: s.columns(px, py).into_owned(),
        canonical_correlations: c.correlations[..r_j].to_vec(),
        scale_x,
        scale_y,
        objective,
        converged,
    })
}
