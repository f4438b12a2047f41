//! C ABI for rubricscore.
//!
//! Every fallible function returns an [`RsStatus`]. On failure the message is
//! kept per thread and can be read with [`rs_last_error_message`]. Strings
//! handed out by this library must be released with [`rs_string_free`];
//! models with [`rs_model_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rubricscore::corpus::{Report, Split};
use rubricscore::metrics::{self, WeightedAccuracyReading};
use rubricscore::pipeline::AssessmentModel;
use rubricscore::Error;

/// Result codes. `Ok` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Config = 4,
    ModeMismatch = 5,
    Checkpoint = 6,
    UndefinedMetric = 7,
    BufferTooSmall = 8,
    Io = 9,
    Panic = 10,
}

/// Opaque handle to a loaded checkpoint.
pub struct RsModel {
    inner: AssessmentModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RsStatus {
    match err {
        Error::Config(_) => RsStatus::Config,
        Error::ModeMismatch { .. } => RsStatus::ModeMismatch,
        Error::CheckpointMismatch(_) => RsStatus::Checkpoint,
        Error::UndefinedMetric(_) => RsStatus::UndefinedMetric,
        Error::Io(_) | Error::Path { .. } | Error::Csv(_) | Error::ProviderUnavailable(_) => RsStatus::Io,
        _ => RsStatus::Validation,
    }
}

fn fail(status: RsStatus, message: impl Into<String>) -> RsStatus {
    set_error(message.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), RsStatus>) -> RsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(RsStatus::Panic, "internal panic"),
    }
}

fn lib_err(err: Error) -> RsStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, RsStatus> {
    if p.is_null() {
        return Err(fail(RsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn read_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], RsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(RsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), RsStatus> {
    if out.is_null() {
        return Err(fail(RsStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Free with
/// [`rs_string_free`].
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_model_load(path: *const c_char, out: *mut *mut RsModel) -> RsStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let model = AssessmentModel::load(Path::new(path)).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(RsModel { inner: model })), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from [`rs_model_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_model_free(model: *mut RsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of rubric dimensions, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_model_num_dimensions(model: *const RsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.rubric.len())
}

/// Id of dimension `index`. Free the result with [`rs_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_model_dimension_id(model: *const RsModel, index: usize, out: *mut *mut c_char) -> RsStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(RsStatus::NullPointer, "model is null"))?;
        let dim = m
            .inner
            .rubric
            .dimensions
            .get(index)
            .ok_or_else(|| fail(RsStatus::Validation, format!("dimension index {index} out of range")))?;
        write_out(out, to_c_string(dim.id.clone()), "out")
    })
}

/// 1 when the checkpoint is presence-only, 0 when scored.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_model_is_presence(model: *const RsModel) -> i32 {
    model.as_ref().map_or(0, |m| {
        (m.inner.config.mode == rubricscore::corpus::DimensionMode::Presence) as i32
    })
}

/// Scores one report. `scores` receives one value per dimension (presence
/// checkpoints write 0/1); `total` receives their sum.
///
/// # Safety
/// `model` must be a live handle, `text` a NUL-terminated string, `scores`
/// writable for `scores_len` bytes and `total` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_model_assess_text(
    model: *const RsModel,
    text: *const c_char,
    scores: *mut u8,
    scores_len: usize,
    total: *mut u32,
) -> RsStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(RsStatus::NullPointer, "model is null"))?;
        let text = read_str(text, "text")?;
        let n = m.inner.rubric.len();
        if scores.is_null() {
            return Err(fail(RsStatus::NullPointer, "scores is null"));
        }
        if scores_len < n {
            return Err(fail(
                RsStatus::BufferTooSmall,
                format!("scores buffer holds {scores_len}, need {n}"),
            ));
        }
        let report = Report::new("input", text, Split::Test).map_err(lib_err)?;
        let values: Vec<u8> = if m.inner.config.mode == rubricscore::corpus::DimensionMode::Presence {
            let r = m.inner.assess_presence(&report).map_err(lib_err)?;
            r.present.iter().map(|&p| p as u8).collect()
        } else {
            let r = m.inner.assess(&report).map_err(lib_err)?;
            r.per_dimension.iter().map(|d| d.score).collect()
        };
        std::slice::from_raw_parts_mut(scores, n).copy_from_slice(&values);
        write_out(total, values.iter().map(|&v| v as u32).sum(), "total")
    })
}

/// Full assessment (scores, verifier probabilities, selected sentence
/// positions) as a JSON string. Free with [`rs_string_free`].
///
/// # Safety
/// `model` must be a live handle, `report_id` and `text` NUL-terminated
/// strings, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_model_assess_json(
    model: *const RsModel,
    report_id: *const c_char,
    text: *const c_char,
    out: *mut *mut c_char,
) -> RsStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(RsStatus::NullPointer, "model is null"))?;
        let id = read_str(report_id, "report_id")?;
        let text = read_str(text, "text")?;
        let report = Report::new(id, text, Split::Test).map_err(lib_err)?;
        let json = if m.inner.config.mode == rubricscore::corpus::DimensionMode::Presence {
            serde_json::to_string(&m.inner.assess_presence(&report).map_err(lib_err)?)
        } else {
            serde_json::to_string(&m.inner.assess(&report).map_err(lib_err)?)
        }
        .map_err(|e| fail(RsStatus::Validation, e.to_string()))?;
        write_out(out, to_c_string(json), "out")
    })
}

/// Mean squared error of two equal-length arrays.
///
/// # Safety
/// `preds` and `truths` must be readable for `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_mse(preds: *const f64, truths: *const f64, n: usize, out: *mut f64) -> RsStatus {
    guard(|| {
        let p = read_slice(preds, n, "preds")?;
        let t = read_slice(truths, n, "truths")?;
        write_out(out, metrics::mse(p, t).map_err(lib_err)?, "out")
    })
}

/// `1 - |g - y| / max_distance` averaged over items.
///
/// # Safety
/// `preds` and `truths` must be readable for `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_weighted_accuracy(
    preds: *const f64,
    truths: *const f64,
    n: usize,
    max_distance: f64,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let p = read_slice(preds, n, "preds")?;
        let t = read_slice(truths, n, "truths")?;
        let v = metrics::weighted_accuracy(p, t, max_distance, WeightedAccuracyReading::Normalized).map_err(lib_err)?;
        write_out(out, v, "out")
    })
}

/// Interval Krippendorff alpha. `ratings` is row-major `n_raters x n_units`;
/// NaN marks a missing rating.
///
/// # Safety
/// `ratings` must be readable for `n_raters * n_units` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_krippendorff_alpha_interval(
    ratings: *const f64,
    n_raters: usize,
    n_units: usize,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let len = n_raters
            .checked_mul(n_units)
            .ok_or_else(|| fail(RsStatus::Validation, "ratings size overflows"))?;
        let flat = read_slice(ratings, len, "ratings")?;
        let rows: Vec<Vec<Option<f64>>> = (0..n_raters)
            .map(|r| {
                flat[r * n_units..(r + 1) * n_units]
                    .iter()
                    .map(|&v| (!v.is_nan()).then_some(v))
                    .collect()
            })
            .collect();
        write_out(
            out,
            metrics::krippendorff_alpha_interval(&rows).map_err(lib_err)?,
            "out",
        )
    })
}

/// MASI distance between two sets of sentence positions.
///
/// # Safety
/// `a` and `b` must be readable for `a_len` and `b_len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_masi_distance(
    a: *const usize,
    a_len: usize,
    b: *const usize,
    b_len: usize,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let a: BTreeSet<usize> = read_slice(a, a_len, "a")?.iter().copied().collect();
        let b: BTreeSet<usize> = read_slice(b, b_len, "b")?.iter().copied().collect();
        write_out(out, metrics::masi_distance(&a, &b), "out")
    })
}
