//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SingError};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(a.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(dst, &col);
    }
    (vals, vecs)
}

/// `V diag(f(λ)) Vᵀ` from a precomputed eigendecomposition, restricted to
/// eigenvalues above `floor`.
fn spectral_function(vals: &DVector<f64>, vecs: &DMatrix<f64>, floor: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    let mut keep = 0;
    for (k, &lam) in vals.iter().enumerate() {
        if lam > floor {
            let mut c = scaled.column_mut(k);
            c *= f(lam);
            keep = k + 1;
        } else {
            scaled.column_mut(k).fill(0.0);
        }
    }
    if keep == 0 {
        return DMatrix::zeros(n, n);
    }
    scaled.columns(0, keep) * vecs.columns(0, keep).transpose()
}

/// Inverse square root of a symmetric positive (semi)definite matrix on the
/// eigenspace above `rel_floor * λ_max`.
pub fn sym_inv_sqrt(a: &DMatrix<f64>, rel_floor: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(a);
    let lmax = vals.max().max(0.0);
    spectral_function(&vals, &vecs, rel_floor * lmax, |l| 1.0 / l.sqrt())
}

/// Pseudo-inverse of a symmetric matrix, dropping eigenvalues at or below
/// `rel_floor * λ_max`.
pub fn sym_pinv(a: &DMatrix<f64>, rel_floor: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(a);
    let lmax = vals.max().max(0.0);
    spectral_function(&vals, &vecs, rel_floor * lmax, |l| 1.0 / l)
}

/// Symmetric orthogonalization of the rows: `(A Aᵀ)^{-1/2} A`.
pub fn orthonormalize_rows(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = a * a.transpose();
    let (vals, vecs) = sym_eigen_desc(&gram);
    let lmin = vals.min();
    if !(lmin > 1e-14 * vals.max().max(1e-300)) {
        return Err(SingError::Numerical(
            "rows are linearly dependent; cannot orthonormalize".into(),
        ));
    }
    let q = spectral_function(&vals, &vecs, 0.0, |l| 1.0 / l.sqrt()) * a;
    if orthogonality_error(&q) <= 1e-12 {
        return Ok(q);
    }
    // ill-conditioned Gram: a second pass on the nearly orthonormal result is accurate
    let (vals, vecs) = sym_eigen_desc(&(&q * q.transpose()));
    Ok(spectral_function(&vals, &vecs, 0.0, |l| 1.0 / l.sqrt()) * q)
}

/// Gram-Schmidt on rows, in order. Rows that collapse are an error.
pub fn gram_schmidt_rows(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = a.clone();
    for i in 0..out.nrows() {
        for _pass in 0..2 {
            for j in 0..i {
                let proj = out.row(i).dot(&out.row(j));
                let rj = out.row(j).into_owned();
                let mut ri = out.row_mut(i);
                ri -= rj * proj;
            }
        }
        let norm = out.row(i).norm();
        if norm < 1e-12 {
            return Err(SingError::Numerical(format!("row {i} is dependent on earlier rows")));
        }
        out.row_mut(i).scale_mut(1.0 / norm);
    }
    Ok(out)
}

/// `‖U Uᵀ − I‖_F`.
pub fn orthogonality_error(u: &DMatrix<f64>) -> f64 {
    let g = u * u.transpose();
    let mut acc = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let d = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// `max |S Sᵀ / p − I|` for a matrix whose rows are supposed to have
/// mean-square one and be mutually orthogonal.
pub fn scaled_gram_error(s: &DMatrix<f64>) -> f64 {
    let p = s.ncols() as f64;
    let g = s * s.transpose() / p;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let d = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Cayley retraction `U (I − τ/2 W)(I + τ/2 W)^{-1}` with
/// `W = Uᵀ Gᵀ − G U`, where `U` is `r × m` with orthonormal rows and `G` is
/// the `m × r` Euclidean gradient (columns correspond to rows of `U`).
///
/// The inverse is never formed: the transpose update
/// `(I − τ/2 W)^{-1} (I + τ/2 W) Uᵀ` is obtained from an LU solve.
pub fn cayley_update(u: &DMatrix<f64>, w: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let m = w.nrows();
    let half = 0.5 * tau;
    let ident = DMatrix::<f64>::identity(m, m);
    let lhs = &ident - w * half;
    let rhs = (&ident + w * half) * u.transpose();
    let lu = lhs.lu();
    let ut = lu
        .solve(&rhs)
        .ok_or_else(|| SingError::Numerical("singular Cayley system".into()))?;
    Ok(ut.transpose())
}

/// Skew-symmetric generator `W = Uᵀ Gᵀ − G U`.
pub fn skew_generator(u: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let a = u.transpose() * g.transpose();
    &a - a.transpose()
}

/// Row-wise root mean square.
pub fn row_rms(a: &DMatrix<f64>) -> DVector<f64> {
    let p = a.ncols() as f64;
    DVector::from_iterator(a.nrows(), a.row_iter().map(|r| (r.norm_squared() / p).sqrt()))
}

pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Double-centers an arbitrary matrix (row and column means removed).
pub fn double_center_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = a.shape();
    let mut row_means = vec![0.0; n];
    let mut col_means = Vec::with_capacity(p);
    for c in a.column_iter() {
        let s = c.as_slice();
        for (acc, v) in row_means.iter_mut().zip(s) {
            *acc += v;
        }
        col_means.push(s.iter().sum::<f64>() / n as f64);
    }
    row_means.iter_mut().for_each(|v| *v /= p as f64);
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut out = a.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        let shift = col_means[j] - grand;
        for (v, rm) in c.as_mut_slice().iter_mut().zip(&row_means) {
            *v -= rm + shift;
        }
    }
    out
}

/// Column-centers (subtracts each column's mean).
pub fn center_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for mut c in out.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    out
}

/// Row-centers (subtracts each row's mean).
pub fn center_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let p = a.ncols() as f64;
    let means: Vec<f64> = a.row_iter().map(|r| r.sum() / p).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - means[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cayley_of_skew_generator_stays_orthonormal() {
        let u = gram_schmidt_rows(&DMatrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64))
            .unwrap();
        let g = DMatrix::from_fn(6, 3, |i, j| (i as f64 - j as f64).sin());
        let w = skew_generator(&u, &g);
        assert!((&w + w.transpose()).abs().max() < 1e-14);
        let up = cayley_update(&u, &w, 0.3).unwrap();
        assert!(orthogonality_error(&up) < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let u = gram_schmidt_rows(&DMatrix::from_fn(2, 4, |i, j| (i + 2 * j) as f64 + if i == j { 3.0 } else { 0.0 }))
            .unwrap();
        let w = skew_generator(&u, &DMatrix::zeros(4, 2));
        let up = cayley_update(&u, &w, 0.5).unwrap();
        assert!((up - u).abs().max() < 1e-15);
    }

    #[test]
    fn symmetric_orthonormalization() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]);
        let q = orthonormalize_rows(&a).unwrap();
        assert!(orthogonality_error(&q) < 1e-12);
        let dep = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(orthonormalize_rows(&dep).is_err());
    }

    #[test]
    fn orthonormalization_survives_poor_conditioning() {
        let q = gram_schmidt_rows(&DMatrix::from_fn(30, 40, |i, j| ((i * 31 + j * 17) % 23) as f64 + (i == j) as u8 as f64))
            .unwrap();
        let scales = DMatrix::from_fn(30, 30, |i, j| if i == j { 10f64.powi(-(i as i32) / 5) } else { 0.0 });
        let a = scales * q;
        assert!(orthogonality_error(&orthonormalize_rows(&a).unwrap()) < 1e-12);
    }
}
