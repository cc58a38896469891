//! C ABI for mixmerge.
//!
//! Every function returns an [`MxStatus`]. On failure a message describing the
//! error is kept per thread and can be read with [`mx_last_error`] until the
//! next failing call on that thread. Parameter vectors cross the boundary as
//! opaque [`MxParamVector`] handles; mixtures, grids and matrices as flat
//! row-major `double` buffers owned by the caller.

use mixmerge::linalg::Matrix;
use mixmerge::params::{merge_hessian_weighted, merge_linear, ExpertSet, ParamVector};
use mixmerge::quadbed::QuadDomain;
use mixmerge::simplex::{enumerate_grid, sample_dirichlet, MixtureWeights};
use mixmerge::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MxStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// An argument violated a documented bound.
    InvalidParameter = 2,
    /// Lengths or shape tags do not line up.
    ShapeMismatch = 3,
    /// A numeric routine failed (non-positive-definite matrix, divergence).
    Numeric = 4,
    /// Rank correlation of a constant vector.
    UndefinedCorrelation = 5,
    /// The caller's output buffer is too small; the required size was written.
    BufferTooSmall = 6,
    Io = 7,
    /// A file exists but is not a parameter vector.
    Format = 8,
    /// A Rust panic was caught at the boundary.
    Internal = 9,
}

/// Opaque handle to a flat parameter vector with a shape tag.
pub struct MxParamVector {
    inner: ParamVector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MxStatus {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::Capacity(_) => MxStatus::InvalidParameter,
        Error::Structural(_) | Error::Pairing(_) => MxStatus::ShapeMismatch,
        Error::UndefinedCorrelation(_) => MxStatus::UndefinedCorrelation,
        Error::Io(_) | Error::Absence(_) => MxStatus::Io,
        Error::Format(_) | Error::Json(_) => MxStatus::Format,
        Error::Numeric(_) | Error::NotPositiveDefinite { .. } | Error::Divergence { .. } | Error::Degenerate(_) => {
            MxStatus::Numeric
        }
    }
}

struct Failure(MxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MxStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MxStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MxStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(MxStatus::InvalidParameter, format!("{what} is not UTF-8")))
}

unsafe fn mixture(weights: *const f64, k: usize) -> Result<MixtureWeights, Failure> {
    Ok(MixtureWeights::new(slice(weights, k, "weights")?.to_vec())?)
}

fn put<T>(out: *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { out.write(value) }
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a parameter vector by copying `len` values. `shape_tag` may be
/// null, meaning the empty tag.
///
/// # Safety
/// `values` must point to `len` readable doubles; `shape_tag`, when not null,
/// to a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mx_param_vector_new(
    values: *const f64,
    len: usize,
    shape_tag: *const c_char,
    out: *mut *mut MxParamVector,
) -> MxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let tag = if shape_tag.is_null() { "" } else { c_str(shape_tag, "shape_tag")? };
        let inner = ParamVector::new(slice(values, len, "values")?.to_vec(), tag)?;
        put(out, Box::into_raw(Box::new(MxParamVector { inner })));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `v` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mx_param_vector_free(v: *mut MxParamVector) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Number of values, or 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mx_param_vector_len(v: *const MxParamVector) -> usize {
    v.as_ref().map_or(0, |v| v.inner.len())
}

/// Copies the values into `out`. With `capacity` below the length nothing is
/// copied, `*written` receives the length, and `BufferTooSmall` is returned.
///
/// # Safety
/// `v` must be a live handle; `out` must hold `capacity` doubles; `written`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mx_param_vector_copy_values(
    v: *const MxParamVector,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> MxStatus {
    guard(|| {
        let v = v.as_ref().ok_or_else(|| null("vector"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let n = v.inner.len();
        put(written, n);
        if capacity < n {
            return Err(Failure(MxStatus::BufferTooSmall, format!("need {n} doubles, got {capacity}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(v.inner.values().as_ptr(), out, n);
        Ok(())
    })
}

/// Reads a parameter vector file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mx_param_vector_read(path: *const c_char, out: *mut *mut MxParamVector) -> MxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ParamVector::load(std::path::Path::new(c_str(path, "path")?))?;
        put(out, Box::into_raw(Box::new(MxParamVector { inner })));
        Ok(())
    })
}

/// Writes a parameter vector file (no provenance sidecar).
///
/// # Safety
/// `v` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mx_param_vector_write(v: *const MxParamVector, path: *const c_char) -> MxStatus {
    guard(|| {
        let v = v.as_ref().ok_or_else(|| null("vector"))?;
        let file = std::fs::File::create(c_str(path, "path")?).map_err(Error::from)?;
        let mut w = std::io::BufWriter::new(file);
        v.inner.write_to(&mut w)?;
        std::io::Write::flush(&mut w).map_err(Error::from)?;
        Ok(())
    })
}

/// Merges `k` experts with mixture weights `weights[0..k]` into a new handle.
///
/// # Safety
/// `experts` must point to `k` live handles, `weights` to `k` doubles, and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mx_merge_linear(
    experts: *const *const MxParamVector,
    k: usize,
    weights: *const f64,
    out: *mut *mut MxParamVector,
) -> MxStatus {
    guard(|| {
        if out.is_null() || experts.is_null() {
            return Err(null(if out.is_null() { "out" } else { "experts" }));
        }
        let mut vs = Vec::with_capacity(k);
        for i in 0..k {
            let h = (*experts.add(i)).as_ref().ok_or_else(|| null("expert handle"))?;
            vs.push(h.inner.clone());
        }
        let w = mixture(weights, k)?;
        let base = vs
            .first()
            .map(|e| e.with_values(vec![0.0; e.len()]))
            .transpose()?
            .ok_or_else(|| Failure(MxStatus::InvalidParameter, "need at least one expert".into()))?;
        let names = (0..k).map(|i| i.to_string()).collect();
        let merged = merge_linear(&ExpertSet::new(base, vs, names)?, &w)?;
        put(out, Box::into_raw(Box::new(MxParamVector { inner: merged })));
        Ok(())
    })
}

/// Minimizer of the mixture of `k` quadratics in dimension `d`.
/// `optima` is `k x d` row-major, `hessians` is `k` consecutive `d x d`
/// row-major symmetric positive-definite matrices, `out` receives `d` values.
///
/// # Safety
/// The buffers must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn mx_merge_hessian_weighted(
    k: usize,
    d: usize,
    optima: *const f64,
    hessians: *const f64,
    weights: *const f64,
    out: *mut f64,
) -> MxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let opt = slice(optima, k * d, "optima")?;
        let hs = slice(hessians, k * d * d, "hessians")?;
        let w = mixture(weights, k)?;
        let mut domains = Vec::with_capacity(k);
        for i in 0..k {
            let theta = ParamVector::new(opt[i * d..(i + 1) * d].to_vec(), "quad")?;
            let h = Matrix::from_row_major(d, d, hs[i * d * d..(i + 1) * d * d].to_vec())?;
            domains.push(QuadDomain::new(theta, h, 0.0)?);
        }
        let merged = merge_hessian_weighted(&domains, &w)?;
        ptr::copy_nonoverlapping(merged.values().as_ptr(), out, d);
        Ok(())
    })
}

/// Simplex lattice with step `1/m` in `k` dimensions, written as `*rows x k`
/// row-major doubles. Pass `out = NULL` to query the row count.
///
/// # Safety
/// `out`, when not null, must hold `capacity_rows * k` doubles; `rows` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn mx_enumerate_grid(
    k: usize,
    m: usize,
    include_boundary: bool,
    out: *mut f64,
    capacity_rows: usize,
    rows: *mut usize,
) -> MxStatus {
    guard(|| {
        if rows.is_null() {
            return Err(null("rows"));
        }
        let grid = enumerate_grid(k, m, include_boundary)?;
        put(rows, grid.len());
        if out.is_null() {
            return Ok(());
        }
        if capacity_rows < grid.len() {
            return Err(Failure(MxStatus::BufferTooSmall, format!("need {} rows, got {capacity_rows}", grid.len())));
        }
        for (i, w) in grid.mixtures.iter().enumerate() {
            ptr::copy_nonoverlapping(w.weights().as_ptr(), out.add(i * k), k);
        }
        Ok(())
    })
}

/// `count` draws from a symmetric Dirichlet, written as `count x k` row-major.
///
/// # Safety
/// `out` must hold `count * k` doubles.
#[no_mangle]
pub unsafe extern "C" fn mx_sample_dirichlet(
    k: usize,
    count: usize,
    concentration: f64,
    seed: u64,
    out: *mut f64,
) -> MxStatus {
    guard(|| {
        if out.is_null() && count > 0 {
            return Err(null("out"));
        }
        for (i, w) in sample_dirichlet(k, count, concentration, seed)?.iter().enumerate() {
            ptr::copy_nonoverlapping(w.weights().as_ptr(), out.add(i * k), k);
        }
        Ok(())
    })
}

/// Spearman rank correlation of two length-`n` samples, average ranks on ties.
///
/// # Safety
/// `x` and `y` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mx_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> MxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, mixmerge::spearman(slice(x, n, "x")?, slice(y, n, "y")?)?);
        Ok(())
    })
}
