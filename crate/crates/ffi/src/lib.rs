//! C ABI over `sing-core`.
//!
//! Objects cross the boundary as opaque heap handles that the caller frees
//! with the matching `*_free` function. Every entry point returns a
//! [`SingStatus`]; on failure [`sing_last_error`] describes what went wrong.
//! Matrices are exchanged in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use sing_core::contrast::ContrastConfig;
use sing_core::lngca::{derive_seed, fit_lngca, fit_saturated, LngcaFit, MultiStartConfig};
use sing_core::matching::joint_rank_test;
use sing_core::preprocess::{double_center, whiten, WhitenedData, DEFAULT_RANK_TOL};
use sing_core::sing::{default_rho, fit_sing, init_from_separate, separate_as_joint, JointFit, SingConfig};
use sing_core::{DataMatrix, SingError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingStatus {
    Ok = 0,
    NullPointer = 1,
    DimensionMismatch = 2,
    InvalidInput = 3,
    InvalidConfig = 4,
    NonFinite = 5,
    Constraint = 6,
    NotConverged = 7,
    Numerical = 8,
    Io = 9,
    Parse = 10,
    BufferTooSmall = 11,
    Panic = 99,
}

impl From<&SingError> for SingStatus {
    fn from(e: &SingError) -> Self {
        match e {
            SingError::DimensionMismatch(_) => Self::DimensionMismatch,
            SingError::InvalidInput(_) => Self::InvalidInput,
            SingError::InvalidConfig(_) => Self::InvalidConfig,
            SingError::NonFinite { .. } => Self::NonFinite,
            SingError::Constraint(_) => Self::Constraint,
            SingError::NotConverged { .. } => Self::NotConverged,
            SingError::Numerical(_) => Self::Numerical,
            SingError::Io(_) => Self::Io,
            SingError::Parse(_) => Self::Parse,
        }
    }
}

/// Which matrix of a joint fit to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingJointPart {
    /// Joint subject scores from X, unit columns.
    MJx = 0,
    /// Joint subject scores from Y, unit columns signed to agree with X.
    MJy = 1,
    SJx = 2,
    SJy = 3,
    MIx = 4,
    MIy = 5,
    SIx = 6,
    SIy = 7,
    Ux = 8,
    Uy = 9,
}

/// Which matrix of a single-dataset fit to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingLngcaPart {
    Unmixing = 0,
    Mixing = 1,
    Components = 2,
}

/// Dense matrix of doubles.
pub struct SingMatrix {
    inner: DMatrix<f64>,
}

pub struct SingLngcaFit {
    inner: LngcaFit,
}

pub struct SingJointFit {
    inner: JointFit,
}

/// Options for [`sing_joint_fit`]. Obtain defaults from
/// [`sing_joint_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SingJointOptions {
    /// Components for X; 0 uses the data rank.
    pub r_x: usize,
    /// Components for Y; 0 uses the data rank.
    pub r_y: usize,
    pub r_j: usize,
    /// Penalty weight; negative selects the default rule.
    pub rho: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Skewness weight of the contrast.
    pub alpha: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SingStatus, String);

impl From<SingError> for Failure {
    fn from(e: SingError) -> Self {
        Failure(SingStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SingStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SingStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SingStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SingStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: caller passes a handle obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null; caller guarantees it is writable.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn boxed_matrix(m: &DMatrix<f64>, out: *mut *mut SingMatrix) -> Result<(), Failure> {
    // SAFETY: forwarded from the public entry point's contract.
    unsafe { emit(out, SingMatrix { inner: m.clone() }) }
}

fn prepare(x: &DMatrix<f64>) -> Result<WhitenedData, Failure> {
    let data = DataMatrix::new(x.clone())?;
    Ok(whiten(&double_center(&data)?, DEFAULT_RANK_TOL)?)
}

fn contrast(alpha: f64) -> Result<ContrastConfig, Failure> {
    Ok(ContrastConfig::new(alpha)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sing_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn sing_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sing_matrix_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut SingMatrix) -> SingStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(SingStatus::InvalidInput, "matrix size overflows".into()))?;
        // SAFETY: caller guarantees `len` readable values.
        let values = unsafe { std::slice::from_raw_parts(data, len) };
        unsafe { emit(out, SingMatrix { inner: DMatrix::from_row_slice(rows, cols, values) }) }
    })
}

/// # Safety
/// `m` must be a live matrix handle or null.
#[no_mangle]
pub unsafe extern "C" fn sing_matrix_rows(m: *const SingMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.inner.nrows())
}

/// # Safety
/// `m` must be a live matrix handle or null.
#[no_mangle]
pub unsafe extern "C" fn sing_matrix_cols(m: *const SingMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.inner.ncols())
}

/// Writes the values row-major into `buf`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live matrix handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sing_matrix_copy(m: *const SingMatrix, buf: *mut f64, len: usize) -> SingStatus {
    guard(|| {
        let m = unsafe { deref(m, "matrix") }?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let (r, c) = m.inner.shape();
        if len < r * c {
            return Err(Failure(SingStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", r * c)));
        }
        // SAFETY: checked length and non-null.
        let dst = unsafe { std::slice::from_raw_parts_mut(buf, r * c) };
        for i in 0..r {
            for j in 0..c {
                dst[i * c + j] = m.inner[(i, j)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be a handle from this library, freed at most once, or null.
#[no_mangle]
pub unsafe extern "C" fn sing_matrix_free(m: *mut SingMatrix) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Fits `r` non-Gaussian components of a subjects × features matrix; `r = 0`
/// fits as many as the data rank. Double centering and whitening are applied
/// internally.
///
/// # Safety
/// `x` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sing_lngca_fit(
    x: *const SingMatrix,
    r: usize,
    restarts: usize,
    seed: u64,
    alpha: f64,
    out: *mut *mut SingLngcaFit,
) -> SingStatus {
    guard(|| {
        let x = unsafe { deref(x, "x") }?;
        let w = prepare(&x.inner)?;
        let cfg = MultiStartConfig::from_seed(seed, restarts);
        let c = contrast(alpha)?;
        let fit = if r == 0 { fit_saturated(&w, &cfg, &c)? } else { fit_lngca(&w, r, &cfg, &c)? };
        unsafe { emit(out, SingLngcaFit { inner: fit }) }
    })
}

/// # Safety
/// `fit` must be a live fit handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sing_lngca_fit_matrix(fit: *const SingLngcaFit, part: SingLngcaPart, out: *mut *mut SingMatrix) -> SingStatus {
    guard(|| {
        let f = &unsafe { deref(fit, "fit") }?.inner;
        let m = match part {
            SingLngcaPart::Unmixing => f.u.values(),
            SingLngcaPart::Mixing => f.m.values(),
            SingLngcaPart::Components => f.s.values(),
        };
        boxed_matrix(m, out)
    })
}

/// Summed contrast of the fitted components, or NaN for a null handle.
///
/// # Safety
/// `fit` must be a live fit handle or null.
#[no_mangle]
pub unsafe extern "C" fn sing_lngca_fit_objective(fit: *const SingLngcaFit) -> f64 {
    unsafe { fit.as_ref() }.map_or(f64::NAN, |f| f.inner.objective)
}

/// # Safety
/// `fit` must be a handle from this library, freed at most once, or null.
#[no_mangle]
pub unsafe extern "C" fn sing_lngca_fit_free(fit: *mut SingLngcaFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Permutation test for the number of shared score columns between two
/// mixing matrices (subjects × components).
///
/// # Safety
/// `mx`, `my` must be live matrix handles; `r_j` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_rank_test(
    mx: *const SingMatrix,
    my: *const SingMatrix,
    permutations: usize,
    level: f64,
    seed: u64,
    r_j: *mut usize,
) -> SingStatus {
    guard(|| {
        let mx = unsafe { deref(mx, "mx") }?;
        let my = unsafe { deref(my, "my") }?;
        if r_j.is_null() {
            return Err(null("r_j"));
        }
        let res = joint_rank_test(&mx.inner, &my.inner, permutations, level, seed)?;
        unsafe { *r_j = res.r_j };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn sing_joint_options_default() -> SingJointOptions {
    SingJointOptions { r_x: 0, r_y: 0, r_j: 1, rho: -1.0, restarts: 20, seed: 0, alpha: ContrastConfig::default().alpha }
}

/// Separate fits of both datasets, matching, then the penalized joint fit.
///
/// # Safety
/// `x`, `y` must be live matrix handles; `opts` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_fit(
    x: *const SingMatrix,
    y: *const SingMatrix,
    opts: *const SingJointOptions,
    out: *mut *mut SingJointFit,
) -> SingStatus {
    guard(|| {
        let x = unsafe { deref(x, "x") }?;
        let y = unsafe { deref(y, "y") }?;
        let o = *unsafe { deref(opts, "options") }?;
        let c = contrast(o.alpha)?;
        let wx = prepare(&x.inner)?;
        let wy = prepare(&y.inner)?;
        if wx.n() != wy.n() {
            return Err(SingError::DimensionMismatch(format!("X has {} subjects, Y has {}", wx.n(), wy.n())).into());
        }
        let rx = if o.r_x == 0 { wx.retained_rank() } else { o.r_x };
        let ry = if o.r_y == 0 { wy.retained_rank() } else { o.r_y };
        let fx = fit_lngca(&wx, rx, &MultiStartConfig::from_seed(derive_seed(o.seed, 1), o.restarts), &c)?;
        let fy = fit_lngca(&wy, ry, &MultiStartConfig::from_seed(derive_seed(o.seed, 2), o.restarts), &c)?;
        let init = init_from_separate(&fx, &fy, o.r_j)?;
        let rho = if o.rho < 0.0 { default_rho(&init.jb_joint)? } else { o.rho };
        let fit = if rho == 0.0 {
            separate_as_joint(&wx, &wy, &init.u_x, &init.u_y, o.r_j, &c)?
        } else {
            fit_sing(&wx, &wy, &init.u_x, &init.u_y, o.r_j, &SingConfig::with_rho(rho), &c)?
        };
        unsafe { emit(out, SingJointFit { inner: fit }) }
    })
}

/// # Safety
/// `fit` must be a live fit handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_fit_matrix(fit: *const SingJointFit, part: SingJointPart, out: *mut *mut SingMatrix) -> SingStatus {
    guard(|| {
        let f = &unsafe { deref(fit, "fit") }?.inner;
        let m = match part {
            SingJointPart::MJx => f.m_jx.values(),
            SingJointPart::MJy => f.m_jy.values(),
            SingJointPart::SJx => f.s_jx.values(),
            SingJointPart::SJy => f.s_jy.values(),
            SingJointPart::MIx => f.m_ix.values(),
            SingJointPart::MIy => f.m_iy.values(),
            SingJointPart::SIx => f.s_ix.values(),
            SingJointPart::SIy => f.s_iy.values(),
            SingJointPart::Ux => f.u_x.values(),
            SingJointPart::Uy => f.u_y.values(),
        };
        boxed_matrix(m, out)
    })
}

/// Copies the joint scale factors of X (`side = 0`) or Y (`side = 1`).
///
/// # Safety
/// `fit` must be a live fit handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_fit_scales(fit: *const SingJointFit, side: u32, buf: *mut f64, len: usize) -> SingStatus {
    guard(|| {
        let f = &unsafe { deref(fit, "fit") }?.inner;
        let d = match side {
            0 => &f.d_x,
            1 => &f.d_y,
            _ => return Err(Failure(SingStatus::InvalidInput, format!("side must be 0 or 1, got {side}"))),
        };
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len < d.len() {
            return Err(Failure(SingStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", d.len())));
        }
        unsafe { ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len()) };
        Ok(())
    })
}

/// Penalty weight used by the fit, or NaN for a null handle.
///
/// # Safety
/// `fit` must be a live fit handle or null.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_fit_rho(fit: *const SingJointFit) -> f64 {
    unsafe { fit.as_ref() }.map_or(f64::NAN, |f| f.inner.rho)
}

/// 1 if the search met its stopping rule, 0 otherwise or for a null handle.
///
/// # Safety
/// `fit` must be a live fit handle or null.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_fit_converged(fit: *const SingJointFit) -> i32 {
    unsafe { fit.as_ref() }.map_or(0, |f| i32::from(f.inner.converged))
}

/// # Safety
/// `fit` must be a handle from this library, freed at most once, or null.
#[no_mangle]
pub unsafe extern "C" fn sing_joint_fit_free(fit: *mut SingJointFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Reads the last error as an owned string; convenience for Rust callers.
pub fn last_error_string() -> Option<String> {
    let p = sing_last_error();
    // SAFETY: pointer is either null or a live thread-local CString.
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}
