//! Ground-truth generators for the two-dataset simulation: image-like
//! components for `X`, network-block components for `Y`, structured subject
//! scores, and Gaussian noise calibrated to a target SNR.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data_model::{ComponentMatrix, DataMatrix};
use crate::error::{Result, SingError};
use crate::io;
use crate::linalg;
use crate::metrics::{variance_decomposition, VarianceDecomposition};

pub const SNR_LOW: f64 = 0.2;
pub const SNR_HIGH: f64 = 5.0;
pub const IMAGE_SIDE: usize = 33;
pub const NETWORK_NODES: usize = 100;
pub const DEFAULT_SUBJECTS: usize = 48;
pub const SPARSE_THRESHOLD: f64 = 5.0;

const BACKGROUND_VARIANCE: f64 = 0.005;
const BACKGROUND_SEED: u64 = 0x5EED_0001;

/// Pixel index of `(row, col)` in a row-major 33 × 33 image.
pub fn pixel(row: usize, col: usize) -> usize {
    row * IMAGE_SIDE + col
}

/// Index of edge `(i, j)`, `i > j`, in the lower-triangle vectorization
/// (column `j` outer, row `i` inner).
pub fn edge(i: usize, j: usize) -> usize {
    debug_assert!(i > j && i < NETWORK_NODES);
    let n = NETWORK_NODES;
    j * (2 * n - j - 1) / 2 + (i - j - 1)
}

pub fn n_edges() -> usize {
    NETWORK_NODES * (NETWORK_NODES - 1) / 2
}

/// Indices of the square patch `rows × cols` (inclusive ranges).
fn rect(r0: usize, r1: usize, c0: usize, c1: usize) -> Vec<usize> {
    (r0..=r1).flat_map(|r| (c0..=c1).map(move |c| pixel(r, c))).collect()
}

fn plus(cr: usize, cc: usize, arm: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (cc - arm..=cc + arm).map(|c| pixel(cr, c)).collect();
    v.extend((cr - arm..=cr + arm).filter(|&r| r != cr).map(|r| pixel(r, cc)));
    v
}

fn clique(a: usize, b: usize) -> Vec<usize> {
    let mut v = Vec::new();
    for j in a..=b {
        for i in j + 1..=b {
            v.push(edge(i, j));
        }
    }
    v
}

/// Support of each fixture component.
///
/// X (33 × 33, zero-based): individual 3 × 3 square at rows/cols 4–6; joint 1
/// a 1 × 10 bar on row 16, cols 12–21; joint 2 a plus centred at (25, 25)
/// with arm length 2. Y (100 nodes): cliques on nodes 5–14 and 30–38
/// (joint), 55–62 and 75–84 (individual).
pub struct FixtureSupports {
    pub x_joint: [Vec<usize>; 2],
    pub x_individual: [Vec<usize>; 1],
    pub y_joint: [Vec<usize>; 2],
    pub y_individual: [Vec<usize>; 2],
}

pub fn fixture_supports() -> FixtureSupports {
    FixtureSupports {
        x_joint: [rect(16, 16, 12, 21), plus(25, 25, 2)],
        x_individual: [rect(4, 6, 4, 6)],
        y_joint: [clique(5, 14), clique(30, 38)],
        y_individual: [clique(55, 62), clique(75, 84)],
    }
}

/// Joint and individual component blocks for both datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting1Components {
    pub s_jx: ComponentMatrix,
    pub s_ix: ComponentMatrix,
    pub s_jy: ComponentMatrix,
    pub s_iy: ComponentMatrix,
}

impl Setting1Components {
    /// `[individual; joint 1; joint 2]`, 3 × 1089.
    pub fn sx(&self) -> DMatrix<f64> {
        stack(self.s_ix.values(), self.s_jx.values())
    }

    /// `[joint 1; joint 2; individual 1; individual 2]`, 4 × 4950.
    pub fn sy(&self) -> DMatrix<f64> {
        stack(self.s_jy.values(), self.s_iy.values())
    }
}

pub(crate) fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn patterned(p: usize, supports: &[Vec<usize>], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let bg = Normal::new(0.0, BACKGROUND_VARIANCE.sqrt()).expect("valid normal");
    let mut m = DMatrix::from_fn(supports.len(), p, |_, _| bg.sample(rng));
    for (k, sup) in supports.iter().enumerate() {
        for &j in sup {
            m[(k, j)] = 1.0;
        }
    }
    m
}

/// Centers rows, Gram-Schmidt in the given order, scales to `‖row‖² = p`.
fn orthogonalize(rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = rows.ncols() as f64;
    Ok(linalg::gram_schmidt_rows(&linalg::center_rows(rows))? * p.sqrt())
}

fn split(m: DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = m.rows(0, k).into_owned();
    let b = m.rows(k, m.nrows() - k).into_owned();
    (a, b)
}

/// The fixed component shapes: 3 image components (1 individual, 2 joint)
/// and 4 network components (2 joint, 2 individual).
pub fn setting1_components() -> Result<Setting1Components> {
    let sup = fixture_supports();
    let mut rng = ChaCha8Rng::seed_from_u64(BACKGROUND_SEED);
    let x_sup: Vec<Vec<usize>> = sup.x_joint.iter().chain(sup.x_individual.iter()).cloned().collect();
    let y_sup: Vec<Vec<usize>> = sup.y_joint.iter().chain(sup.y_individual.iter()).cloned().collect();
    let x = orthogonalize(&patterned(IMAGE_SIDE * IMAGE_SIDE, &x_sup, &mut rng))?;
    let y = orthogonalize(&patterned(n_edges(), &y_sup, &mut rng))?;
    let (jx, ix) = split(x, 2);
    let (jy, iy) = split(y, 2);
    Ok(Setting1Components {
        s_jx: ComponentMatrix::new(jx)?,
        s_ix: ComponentMatrix::new(ix)?,
        s_jy: ComponentMatrix::new(jy)?,
        s_iy: ComponentMatrix::new(iy)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyReport {
    pub zero_fraction: f64,
    /// Row means after re-normalization; re-centering would destroy the zeros.
    pub row_means: Vec<f64>,
}

/// Zeroes entries with `|s| < threshold`, then orthogonalizes each row
/// against the earlier rows using only its own support, and rescales rows to
/// mean-square one. The zero pattern is preserved exactly.
pub fn sparsify_components(s: &ComponentMatrix, threshold: f64) -> Result<(ComponentMatrix, SparsifyReport)> {
    if !(threshold >= 0.0) {
        return Err(SingError::InvalidConfig("threshold must be non-negative".into()));
    }
    let (r, p) = (s.r(), s.p());
    let mut out = s.values().map(|v| if v.abs() < threshold { 0.0 } else { v });
    for i in 0..r {
        let support: Vec<usize> = (0..p).filter(|&j| out[(i, j)] != 0.0).collect();
        if support.is_empty() {
            return Err(SingError::InvalidInput(format!("row {i} is entirely below the threshold")));
        }
        if i > 0 {
            // least-squares projection onto earlier rows restricted to the support
            let b = DMatrix::from_fn(i, support.len(), |k, t| out[(k, support[t])]);
            let x = DMatrix::from_fn(support.len(), 1, |t, _| out[(i, support[t])]);
            let gram = &b * b.transpose();
            let coef = linalg::sym_pinv(&gram, 1e-12) * (&b * &x);
            let resid = x - b.transpose() * coef;
            for (t, &j) in support.iter().enumerate() {
                out[(i, j)] = resid[(t, 0)];
            }
        }
        let norm2 = out.row(i).norm_squared();
        if !(norm2 > 0.0) {
            return Err(SingError::InvalidInput(format!("row {i} vanishes after orthogonalization")));
        }
        out.row_mut(i).scale_mut((p as f64 / norm2).sqrt());
    }
    let zeros = out.iter().filter(|v| **v == 0.0).count();
    let report = SparsifyReport {
        zero_fraction: zeros as f64 / (r * p) as f64,
        row_means: out.row_iter().map(|row| row.sum() / p as f64).collect(),
    };
    Ok((ComponentMatrix::with_tolerance(out, 1e-6)?, report))
}

/// Sparse variant of the fixtures (threshold 5 on the unit-variance rows).
pub fn setting1_sparse_components(threshold: f64) -> Result<(Setting1Components, Vec<SparsifyReport>)> {
    let dense = setting1_components()?;
    let (x, rx) = sparsify_components(&ComponentMatrix::trusted(stack(dense.s_jx.values(), dense.s_ix.values())), threshold)?;
    let (y, ry) = sparsify_components(&ComponentMatrix::trusted(dense.sy()), threshold)?;
    let (jx, ix) = split(x.into_inner(), 2);
    let (jy, iy) = split(y.into_inner(), 2);
    Ok((
        Setting1Components {
            s_jx: ComponentMatrix::with_tolerance(jx, 1e-6)?,
            s_ix: ComponentMatrix::with_tolerance(ix, 1e-6)?,
            s_jy: ComponentMatrix::with_tolerance(jy, 1e-6)?,
            s_iy: ComponentMatrix::with_tolerance(iy, 1e-6)?,
        },
        vec![rx, ry],
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub x: DataMatrix,
    pub y: DataMatrix,
    pub m_j: DMatrix<f64>,
    pub m_ix: DMatrix<f64>,
    pub m_iy: DMatrix<f64>,
    pub m_nx: DMatrix<f64>,
    pub m_ny: DMatrix<f64>,
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
    pub s_jx: DMatrix<f64>,
    pub s_ix: DMatrix<f64>,
    pub s_jy: DMatrix<f64>,
    pub s_iy: DMatrix<f64>,
    pub n_x: DMatrix<f64>,
    pub n_y: DMatrix<f64>,
    pub snr_x: f64,
    pub snr_y: f64,
    pub r2_x: VarianceDecomposition,
    pub r2_y: VarianceDecomposition,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub seed: u64,
    pub snr_x: f64,
    pub snr_y: f64,
    pub n: usize,
    pub p_x: usize,
    pub p_y: usize,
    pub r_x: usize,
    pub r_y: usize,
    pub r_j: usize,
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
    pub r2_x: VarianceDecomposition,
    pub r2_y: VarianceDecomposition,
    pub files: Vec<String>,
}

fn scale_cols(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (k, mut c) in out.column_iter_mut().enumerate() {
        c *= d[k];
    }
    out
}

/// `M_J D S_J + M_I S_I + M_N N`, in that order.
pub fn compose(m_j: &DMatrix<f64>, d: &[f64], s_j: &DMatrix<f64>, m_i: &DMatrix<f64>, s_i: &DMatrix<f64>, m_n: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    scale_cols(m_j, d) * s_j + m_i * s_i + m_n * n
}

impl SimulationTruth {
    /// `M_J D_x S_Jx`.
    pub fn joint_x(&self) -> DMatrix<f64> {
        scale_cols(&self.m_j, &self.d_x) * &self.s_jx
    }

    pub fn joint_y(&self) -> DMatrix<f64> {
        scale_cols(&self.m_j, &self.d_y) * &self.s_jy
    }

    /// `M_J` with centered columns: the score directions identifiable after
    /// double centering.
    pub fn m_j_centered(&self) -> DMatrix<f64> {
        linalg::center_columns(&self.m_j)
    }

    pub fn joint_x_centered(&self) -> DMatrix<f64> {
        linalg::double_center_matrix(&self.joint_x())
    }

    pub fn joint_y_centered(&self) -> DMatrix<f64> {
        linalg::double_center_matrix(&self.joint_y())
    }

    pub fn manifest(&self) -> TruthManifest {
        TruthManifest {
            seed: self.seed,
            snr_x: self.snr_x,
            snr_y: self.snr_y,
            n: self.x.n(),
            p_x: self.x.p(),
            p_y: self.y.p(),
            r_x: self.s_jx.nrows() + self.s_ix.nrows(),
            r_y: self.s_jy.nrows() + self.s_iy.nrows(),
            r_j: self.s_jx.nrows(),
            d_x: self.d_x.clone(),
            d_y: self.d_y.clone(),
            r2_x: self.r2_x,
            r2_y: self.r2_y,
            files: TRUTH_FILES.iter().map(|s| format!("{s}.csv")).collect(),
        }
    }

    /// Writes every matrix as CSV plus `manifest.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<TruthManifest> {
        std::fs::create_dir_all(dir)?;
        let mats: [(&str, &DMatrix<f64>); 13] = [
            ("X", self.x.values()),
            ("Y", self.y.values()),
            ("M_J", &self.m_j),
            ("M_Ix", &self.m_ix),
            ("M_Iy", &self.m_iy),
            ("M_Nx", &self.m_nx),
            ("M_Ny", &self.m_ny),
            ("S_Jx", &self.s_jx),
            ("S_Ix", &self.s_ix),
            ("S_Jy", &self.s_jy),
            ("S_Iy", &self.s_iy),
            ("N_x", &self.n_x),
            ("N_y", &self.n_y),
        ];
        for (name, m) in mats {
            io::write_csv(&dir.join(format!("{name}.csv")), m)?;
        }
        let manifest = self.manifest();
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

const TRUTH_FILES: [&str; 13] = ["X", "Y", "M_J", "M_Ix", "M_Iy", "M_Nx", "M_Ny", "S_Jx", "S_Ix", "S_Jy", "S_Iy", "N_x", "N_y"];

fn alternating(n: usize, block: usize, first: f64) -> Vec<f64> {
    (0..n).map(|i| if (i / block) % 2 == 0 { first } else { -first }).collect()
}

fn scores_with_means(n: usize, means: &[Vec<f64>], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, means.len());
    for (k, mu) in means.iter().enumerate() {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, k)] = mu[i] + z;
        }
    }
    m
}

/// Gaussian rows, centered and orthogonal to every row of `s`.
fn gaussian_components(k: usize, s: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let p = s.ncols();
    let raw = DMatrix::from_fn(k, p, |_, _| StandardNormal.sample(rng));
    let c = linalg::center_rows(&raw);
    let proj = (&c * s.transpose()) * s / p as f64;
    c - proj
}

/// Noise scale giving `‖signal‖² / ‖c · noise‖² = snr`.
fn noise_scale(signal: &DMatrix<f64>, noise: &DMatrix<f64>, snr: f64) -> f64 {
    (linalg::frobenius_sq(signal) / (snr * linalg::frobenius_sq(noise))).sqrt()
}

fn validate_snr(snr: f64) -> Result<()> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(SingError::InvalidConfig(format!("SNR must be positive, got {snr}")));
    }
    Ok(())
}

/// Simulated pair of datasets from the default dense fixtures and 48 subjects.
pub fn setting1_generate(snr_x: f64, snr_y: f64, seed: u64) -> Result<SimulationTruth> {
    setting1_generate_from(&setting1_components()?, snr_x, snr_y, seed, DEFAULT_SUBJECTS)
}

/// Simulated pair of datasets from the given components.
///
/// Scores: `M_J ~ N(μ₁, I), N(−μ₁, I)` with `μ₁ = (1₂₄, −1₂₄)` (halves of
/// `n` in general), `D_x = I`, `D_y = diag(−5, 2)`; individual score means
/// alternate in blocks of `n/4` for `X` and `n/8`, `n/2` for `Y`. Each
/// dataset gets `n − r − 1` Gaussian noise components scaled to the SNR.
pub fn setting1_generate_from(comp: &Setting1Components, snr_x: f64, snr_y: f64, seed: u64, n: usize) -> Result<SimulationTruth> {
    validate_snr(snr_x)?;
    validate_snr(snr_y)?;
    let r_x = comp.s_jx.r() + comp.s_ix.r();
    let r_y = comp.s_jy.r() + comp.s_iy.r();
    if n < r_x.max(r_y) + 3 || n % 8 != 0 {
        return Err(SingError::InvalidConfig(format!("subject count {n} must be a multiple of 8 above the rank")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu1 = alternating(n, n / 2, 1.0);
    let mu2 = alternating(n, n / 2, -1.0);
    let m_j = scores_with_means(n, &[mu1, mu2], &mut rng);
    let m_ix = scores_with_means(n, &[alternating(n, n / 4, -1.0)], &mut rng);
    let m_iy = scores_with_means(n, &[alternating(n, n / 8, -1.0), alternating(n, n / 2, 1.0)], &mut rng);
    let d_x = vec![1.0, 1.0];
    let d_y = vec![-5.0, 2.0];

    let sx_all = stack(comp.s_jx.values(), comp.s_ix.values());
    let sy_all = stack(comp.s_jy.values(), comp.s_iy.values());
    let kx = n - r_x - 1;
    let ky = n - r_y - 1;
    let m_nx_raw = DMatrix::from_fn(n, kx, |_, _| StandardNormal.sample(&mut rng));
    let n_x = gaussian_components(kx, &sx_all, &mut rng);
    let m_ny_raw = DMatrix::from_fn(n, ky, |_, _| StandardNormal.sample(&mut rng));
    let n_y = gaussian_components(ky, &sy_all, &mut rng);

    let s_jx = comp.s_jx.values().clone();
    let s_ix = comp.s_ix.values().clone();
    let s_jy = comp.s_jy.values().clone();
    let s_iy = comp.s_iy.values().clone();
    let sig_x = scale_cols(&m_j, &d_x) * &s_jx + &m_ix * &s_ix;
    let sig_y = scale_cols(&m_j, &d_y) * &s_jy + &m_iy * &s_iy;
    let m_nx = &m_nx_raw * noise_scale(&sig_x, &(&m_nx_raw * &n_x), snr_x);
    let m_ny = &m_ny_raw * noise_scale(&sig_y, &(&m_ny_raw * &n_y), snr_y);

    let x = compose(&m_j, &d_x, &s_jx, &m_ix, &s_ix, &m_nx, &n_x);
    let y = compose(&m_j, &d_y, &s_jy, &m_iy, &s_iy, &m_ny, &n_y);
    let r2_x = variance_decomposition(&x, &s_jx, &s_ix)?;
    let r2_y = variance_decomposition(&y, &s_jy, &s_iy)?;
    Ok(SimulationTruth {
        x: DataMatrix::new(x)?,
        y: DataMatrix::new(y)?,
        m_j,
        m_ix,
        m_iy,
        m_nx,
        m_ny,
        d_x,
        d_y,
        s_jx,
        s_ix,
        s_jy,
        s_iy,
        n_x,
        n_y,
        snr_x,
        snr_y,
        r2_x,
        r2_y,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::skewness;

    #[test]
    fn fixture_shapes_and_orthogonality() {
        let c = setting1_components().unwrap();
        assert_eq!(c.sx().shape(), (3, 1089));
        assert_eq!(c.sy().shape(), (4, 4950));
        assert!(linalg::scaled_gram_error(&c.sx()) < 1e-8);
        assert!(linalg::scaled_gram_error(&c.sy()) < 1e-8);
        for row in c.sx().row_iter().chain(c.sy().row_iter()) {
            assert!(row.sum().abs() < 1e-8);
        }
    }

    #[test]
    fn blocks_dominate_background() {
        let sup = fixture_supports();
        assert_eq!(sup.y_joint[0].len(), 45);
        assert_eq!(sup.y_joint[1].len(), 36);
        assert_eq!(sup.y_individual[0].len(), 28);
        assert_eq!(sup.y_individual[1].len(), 45);
        assert_eq!(sup.x_individual[0].len(), 9);
        assert_eq!(sup.x_joint[0].len(), 10);
        assert_eq!(sup.x_joint[1].len(), 9);
        let c = setting1_components().unwrap();
        let sy = c.s_jy.values();
        let on: f64 = sup.y_joint[0].iter().map(|&j| sy[(0, j)]).sum::<f64>() / 45.0;
        let off_sd = {
            let mask: std::collections::HashSet<usize> = sup.y_joint[0].iter().copied().collect();
            let v: Vec<f64> = (0..4950).filter(|j| !mask.contains(j)).map(|j| sy[(0, j)]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        assert!(on > 10.0 * off_sd, "block mean {on}, background sd {off_sd}");
        // every fixture component is strongly right-skewed
        for row in c.sx().row_iter().chain(c.sy().row_iter()) {
            let v: Vec<f64> = row.iter().copied().collect();
            assert!(skewness(&v).unwrap() > 3.0);
        }
    }

    #[test]
    fn edge_indexing() {
        assert_eq!(edge(1, 0), 0);
        assert_eq!(edge(99, 0), 98);
        assert_eq!(edge(2, 1), 99);
        assert_eq!(edge(99, 98), n_edges() - 1);
        let mut all: Vec<usize> = (0..100).flat_map(|j| (j + 1..100).map(move |i| edge(i, j))).collect();
        all.sort();
        assert_eq!(all, (0..4950).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_exact_and_calibrated() {
        let t = setting1_generate(SNR_LOW, SNR_HIGH, 3).unwrap();
        let x = compose(&t.m_j, &t.d_x, &t.s_jx, &t.m_ix, &t.s_ix, &t.m_nx, &t.n_x);
        assert_eq!(&x, t.x.values());
        let y = compose(&t.m_j, &t.d_y, &t.s_jy, &t.m_iy, &t.s_iy, &t.m_ny, &t.n_y);
        assert_eq!(&y, t.y.values());
        assert!((t.r2_x.snr - SNR_LOW).abs() / SNR_LOW < 0.02);
        assert!((t.r2_y.snr - SNR_HIGH).abs() / SNR_HIGH < 0.02);
        assert_eq!(t.m_nx.ncols(), 48 - 3 - 1);
        assert_eq!(t.m_ny.ncols(), 48 - 4 - 1);
        // noise rows orthogonal to the components
        assert!((&t.n_x * t.s_jx.transpose()).amax() < 1e-8);
        assert!((&t.n_y * t.s_iy.transpose()).amax() < 1e-8);
    }

    #[test]
    fn joint_variance_bands() {
        let mut lo_x = Vec::new();
        let mut hi_y = Vec::new();
        for seed in 0..10 {
            let t = setting1_generate(SNR_LOW, SNR_HIGH, seed).unwrap();
            lo_x.push(t.r2_x.r2_joint);
            hi_y.push(t.r2_y.r2_joint);
        }
        assert!(lo_x.iter().all(|v| (0.05..=0.20).contains(v)), "{lo_x:?}");
        assert!(hi_y.iter().all(|v| (0.6..=0.9).contains(v)), "{hi_y:?}");
        let mean_lo = lo_x.iter().sum::<f64>() / 10.0;
        assert!((0.09..=0.13).contains(&mean_lo), "mean {mean_lo}");
    }

    #[test]
    fn same_seed_same_truth() {
        let a = setting1_generate(SNR_HIGH, SNR_LOW, 11).unwrap();
        let b = setting1_generate(SNR_HIGH, SNR_LOW, 11).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.write_dir(&dir.path().join("a")).unwrap();
        b.write_dir(&dir.path().join("b")).unwrap();
        for f in ["X.csv", "S_Jy.csv", "manifest.json"] {
            let fa = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let fb = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(fa, fb, "{f}");
        }
    }

    #[test]
    fn sparsify_threshold_zero_keeps_rows() {
        let c = setting1_components().unwrap();
        let (s, rep) = sparsify_components(&c.s_jx, 0.0).unwrap();
        assert!((s.values() - c.s_jx.values()).amax() < 1e-10);
        assert!(rep.zero_fraction < 1e-3);
    }

    #[test]
    fn sparsify_huge_threshold_fails() {
        let c = setting1_components().unwrap();
        let big = c.s_jx.values().amax() + 1.0;
        assert!(sparsify_components(&c.s_jx, big).is_err());
    }

    #[test]
    fn sparse_fixtures_are_sparse_and_orthogonal() {
        let (c, reports) = setting1_sparse_components(SPARSE_THRESHOLD).unwrap();
        for rep in &reports {
            assert!(rep.zero_fraction >= 0.99, "{}", rep.zero_fraction);
        }
        assert!(linalg::scaled_gram_error(&c.sx()) < 1e-6);
        assert!(linalg::scaled_gram_error(&c.sy()) < 1e-6);
    }

    #[test]
    fn sparsify_overlapping_supports() {
        // rows sharing part of their support plus a faint dense background
        let p = 200;
        let mut m = DMatrix::zeros(2, p);
        for j in 0..20 {
            m[(0, j)] = 1.0;
        }
        for j in 10..30 {
            m[(1, j)] = if (15..20).contains(&j) { -1.0 } else { 1.0 };
        }
        for j in 0..p {
            m[(0, j)] += 0.001 * ((j * 7) % 13) as f64;
            m[(1, j)] -= 0.001 * ((j * 5) % 11) as f64;
        }
        let s = ComponentMatrix::orthonormalized(&m).unwrap();
        let (out, rep) = sparsify_components(&s, 1.0).unwrap();
        assert!(linalg::scaled_gram_error(out.values()) < 1e-6);
        for i in 0..2 {
            for j in 30..p {
                assert_eq!(out.values()[(i, j)], 0.0);
            }
        }
        assert!((rep.zero_fraction - 360.0 / 400.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_generation_keeps_sparsity_in_truth() {
        let (c, _) = setting1_sparse_components(SPARSE_THRESHOLD).unwrap();
        let t = setting1_generate_from(&c, SNR_LOW, SNR_LOW, 1, 48).unwrap();
        let zeros = t.s_jx.iter().filter(|v| **v == 0.0).count();
        assert!(zeros as f64 / t.s_jx.len() as f64 >= 0.99);
        assert!((t.r2_x.snr - SNR_LOW).abs() / SNR_LOW < 0.02);
    }
}
