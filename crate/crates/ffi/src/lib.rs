//! C ABI over `logsig-core`.
//!
//! Every fallible function returns an [`LsStatus`]; on failure the message is
//! kept per thread and read back with [`ls_last_error`]. Arrays are dense,
//! row-major `double` buffers whose lengths the caller passes explicitly.
//! Timestamps are optional: a null `times` pointer means `0, 1, …, n − 1`.
//! Handles are opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use logsig_core::neural::{checkpoint, Model, SkeletonSequence};
use logsig_core::{Error, LyndonBasis, SegmentPartition, TimedPath};
use ndarray::{Array2, Array3, ArrayView2};

/// Outcome of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Buffer lengths or shapes that do not agree.
    Dimension = 2,
    /// Argument outside the domain of the operation.
    Domain = 3,
    /// Malformed checkpoint text.
    Parse = 4,
    Io = 5,
    Config = 6,
    NonFinite = 7,
    /// The library panicked; the message says where.
    Internal = 8,
}

/// A Lyndon basis for a fixed width and degree.
pub struct LsBasis(LyndonBasis);

/// A trained classifier loaded from a checkpoint.
pub struct LsModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> LsStatus {
    match err {
        Error::Dimension(_) | Error::Range(_) => LsStatus::Dimension,
        Error::Domain(_) | Error::Truncation { .. } | Error::NotLie { .. } => LsStatus::Domain,
        Error::Parse { .. } => LsStatus::Parse,
        Error::Io { .. } => LsStatus::Io,
        Error::Config(_) => LsStatus::Config,
        Error::NonFinite(_) => LsStatus::NonFinite,
    }
}

/// Runs `body`, recording any error or panic.
fn guard(body: impl FnOnce() -> Result<(), (LsStatus, String)>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LsStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(message);
            LsStatus::Internal
        }
    }
}

type Failure = (LsStatus, String);

fn core(err: Error) -> Failure {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> Failure {
    (LsStatus::NullPointer, format!("{name} is null"))
}

fn dimension(message: String) -> Failure {
    (LsStatus::Dimension, message)
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

fn expect_len(name: &str, got: usize, want: usize) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(dimension(format!(
            "{name} has length {got}, expected {want}"
        )))
    }
}

unsafe fn timestamps(times: *const f64, n: usize) -> Vec<f64> {
    if times.is_null() {
        (0..n).map(|i| i as f64).collect()
    } else {
        std::slice::from_raw_parts(times, n).to_vec()
    }
}

unsafe fn build_path(
    times: *const f64,
    points: *const f64,
    n: usize,
    d: usize,
) -> Result<TimedPath, Failure> {
    let values = slice(points, n * d, "points")?;
    let pts =
        Array2::from_shape_vec((n, d), values.to_vec()).map_err(|e| dimension(e.to_string()))?;
    TimedPath::new(timestamps(times, n), pts).map_err(core)
}

/// Length of the truncated signature of a `d`-dimensional path at degree
/// `m`, scalar level included; 0 if either is 0.
#[no_mangle]
pub extern "C" fn ls_sig_dim(d: usize, m: usize) -> usize {
    if d == 0 || m == 0 {
        return 0;
    }
    logsig_core::sig_dim(d, m)
}

/// Number of Lyndon words of length at most `m` over `d` letters.
#[no_mangle]
pub extern "C" fn ls_logsig_dim(d: usize, m: usize) -> usize {
    if d == 0 || m == 0 {
        return 0;
    }
    logsig_core::logsig_dim(d, m)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds the Lyndon basis for width `d` and degree `m`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ls_basis_new(d: usize, m: usize, out: *mut *mut LsBasis) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let basis = LyndonBasis::new(d, m).map_err(core)?;
        *out = Box::into_raw(Box::new(LsBasis(basis)));
        Ok(())
    })
}

/// Releases a basis; null is a no-op.
///
/// # Safety
/// `basis` must come from [`ls_basis_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ls_basis_free(basis: *mut LsBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Number of basis elements; 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_basis_len(basis: *const LsBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.len())
}

/// Writes the 1-based letters of word `index` into `letters` and its length
/// into `len`. With a short buffer only `len` is written and the call fails
/// with `Dimension`, so a first call with `cap = 0` queries the length.
///
/// # Safety
/// `basis` must be a live handle, `letters` valid for `cap` writes and `len`
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ls_basis_word(
    basis: *const LsBasis,
    index: usize,
    letters: *mut usize,
    cap: usize,
    len: *mut usize,
) -> LsStatus {
    guard(|| {
        let b = handle(basis, "basis")?;
        if len.is_null() {
            return Err(null("len"));
        }
        let word =
            b.0.words().nth(index).ok_or_else(|| {
                dimension(format!("index {index} outside basis of {}", b.0.len()))
            })?;
        *len = word.len();
        if cap < word.len() {
            return Err(dimension(format!(
                "word needs {} letters, buffer holds {cap}",
                word.len()
            )));
        }
        if letters.is_null() {
            return Err(null("letters"));
        }
        for (i, &l) in word.letters().iter().enumerate() {
            *letters.add(i) = l + 1;
        }
        Ok(())
    })
}

/// Truncated signature of the path through `n` points of dimension `d` at
/// degree `m`. `out` holds [`ls_sig_dim`] values, level by level.
///
/// # Safety
/// `points` must hold `n·d` values, `times` must be null or hold `n`, and
/// `out` must hold `out_len`.
#[no_mangle]
pub unsafe extern "C" fn ls_signature(
    times: *const f64,
    points: *const f64,
    n: usize,
    d: usize,
    m: usize,
    out: *mut f64,
    out_len: usize,
) -> LsStatus {
    guard(|| {
        let path = build_path(times, points, n, d)?;
        let sig = logsig_core::signature(&path, m).map_err(core)?;
        expect_len("out", out_len, sig.as_slice().len())?;
        slice_mut(out, out_len, "out")?.copy_from_slice(sig.as_slice());
        Ok(())
    })
}

/// Log-signature in the coordinates of `basis`, whose width and degree fix
/// the path dimension and truncation.
///
/// # Safety
/// `basis` must be a live handle, `points` must hold `n·width` values,
/// `times` must be null or hold `n`, and `out` must hold `out_len`.
#[no_mangle]
pub unsafe extern "C" fn ls_log_signature(
    basis: *const LsBasis,
    times: *const f64,
    points: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> LsStatus {
    guard(|| {
        let b = &handle(basis, "basis")?.0;
        let path = build_path(times, points, n, b.width())?;
        let coords = logsig_core::log_signature(&path, b.depth(), b).map_err(core)?;
        expect_len("out", out_len, b.len())?;
        slice_mut(out, out_len, "out")?.copy_from_slice(coords.as_slice());
        Ok(())
    })
}

/// Log-signatures over `segments` equal pieces of the path's time span,
/// written as a `segments × len(basis)` matrix.
///
/// # Safety
/// As [`ls_log_signature`].
#[no_mangle]
pub unsafe extern "C" fn ls_logsig_sequence(
    basis: *const LsBasis,
    times: *const f64,
    points: *const f64,
    n: usize,
    segments: usize,
    out: *mut f64,
    out_len: usize,
) -> LsStatus {
    guard(|| {
        let b = &handle(basis, "basis")?.0;
        let path = build_path(times, points, n, b.width())?;
        let partition = SegmentPartition::for_path(&path, segments).map_err(core)?;
        let seq = logsig_core::logsig_sequence(&path, &partition, b.depth(), b).map_err(core)?;
        expect_len("out", out_len, segments * b.len())?;
        let values = seq.into_inner();
        slice_mut(out, out_len, "out")?
            .copy_from_slice(values.as_standard_layout().as_slice().unwrap());
        Ok(())
    })
}

/// Gradient with respect to the `n × width` points of
/// `Σ upstream ⊙ ls_logsig_sequence(...)`.
///
/// # Safety
/// As [`ls_logsig_sequence`]; `upstream` must hold `upstream_len` values
/// and `grad` must hold `grad_len`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ls_logsig_sequence_backward(
    basis: *const LsBasis,
    times: *const f64,
    points: *const f64,
    n: usize,
    segments: usize,
    upstream: *const f64,
    upstream_len: usize,
    grad: *mut f64,
    grad_len: usize,
) -> LsStatus {
    guard(|| {
        let b = &handle(basis, "basis")?.0;
        let path = build_path(times, points, n, b.width())?;
        let partition = SegmentPartition::for_path(&path, segments).map_err(core)?;
        expect_len("upstream", upstream_len, segments * b.len())?;
        expect_len("grad", grad_len, n * b.width())?;
        let up = ArrayView2::from_shape(
            (segments, b.len()),
            slice(upstream, upstream_len, "upstream")?,
        )
        .map_err(|e| dimension(e.to_string()))?;
        let g = logsig_core::logsig_sequence_backward(&path, &partition, b.depth(), b, up)
            .map_err(core)?;
        slice_mut(grad, grad_len, "grad")?
            .copy_from_slice(g.as_standard_layout().as_slice().unwrap());
        Ok(())
    })
}

/// Loads a checkpoint written by `logsig train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn ls_model_load(path: *const c_char, out: *mut *mut LsModel) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| (LsStatus::Domain, format!("path is not UTF-8: {e}")))?;
        let (model, _) = checkpoint::load(Path::new(path)).map_err(core)?;
        *out = Box::into_raw(Box::new(LsModel(model)));
        Ok(())
    })
}

/// Releases a model; null is a no-op.
///
/// # Safety
/// `model` must come from [`ls_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ls_model_free(model: *mut LsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the expected joints, coordinates per joint and class count.
///
/// # Safety
/// `model` must be a live handle; each output must be null or valid for a
/// write.
#[no_mangle]
pub unsafe extern "C" fn ls_model_shape(
    model: *const LsModel,
    joints: *mut usize,
    coords: *mut usize,
    classes: *mut usize,
) -> LsStatus {
    guard(|| {
        let c = handle(model, "model")?.0.config();
        for (p, v) in [(joints, c.joints), (coords, c.coords), (classes, c.classes)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Classifies one sequence of `n` frames, each `joints × coords` values.
/// `logits` (null or `classes` long) receives the class scores and `label`
/// the arg-max.
///
/// # Safety
/// `model` must be a live handle, `frames` must hold `n·joints·coords`
/// values, `times` must be null or hold `n`, `logits` must be null or hold
/// `logits_len`, and `label` must be valid for a write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ls_model_predict(
    model: *const LsModel,
    times: *const f64,
    frames: *const f64,
    n: usize,
    joints: usize,
    coords: usize,
    logits: *mut f64,
    logits_len: usize,
    label: *mut usize,
) -> LsStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        if label.is_null() {
            return Err(null("label"));
        }
        let values = slice(frames, n * joints * coords, "frames")?;
        let frames = Array3::from_shape_vec((n, joints, coords), values.to_vec())
            .map_err(|e| dimension(e.to_string()))?;
        let x = SkeletonSequence::new(timestamps(times, n), frames, None).map_err(core)?;
        let scores = m.forward(&x).map_err(core)?;
        if !logits.is_null() {
            expect_len("logits", logits_len, scores.len())?;
            slice_mut(logits, logits_len, "logits")?.copy_from_slice(scores.as_slice().unwrap());
        }
        *label = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0;
        Ok(())
    })
}
