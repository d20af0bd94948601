//! C ABI over the `infodemic` crate.
//!
//! Every fallible function returns an [`InfdStatus`]. On failure a message
//! is kept per thread and can be read with [`infd_last_error`]. Strings
//! returned through out-parameters are owned by the caller and released
//! with [`infd_string_free`]; model handles with [`infd_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use infodemic::corpus::Label;
use infodemic::evaluate::{confusion, metrics_with, one_sample_ttest, Averaging};
use infodemic::models::{ModelError, TrainedModel};
use infodemic::preprocess::clean_text;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Corrupt model file or vectorizer fingerprint mismatch.
    BadModel = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// Opaque trained model.
pub struct InfdModel {
    inner: TrainedModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InfdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InfdTTest {
    pub n: usize,
    pub mean: f64,
    pub stddev: f64,
    /// ±infinity when the sample has zero variance and a mean other than mu0.
    pub t_statistic: f64,
    pub critical_value: f64,
    pub reject_null: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(InfdStatus, String);

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::Container(_) | ModelError::FingerprintMismatch { .. } | ModelError::Vectorize(_) => {
                InfdStatus::BadModel
            }
            _ => InfdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(InfdStatus::InvalidArgument, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> InfdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            InfdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            InfdStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(InfdStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string valid for reads.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(InfdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| invalid("result contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

/// Last error message on this thread, or null. Valid until the next call
/// into this library from the same thread.
#[no_mangle]
pub extern "C" fn infd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn infd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a model file written by `infodemic train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_model_load(path: *const c_char, out: *mut *mut InfdModel) -> InfdStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let bytes = std::fs::read(path).map_err(|e| Failure(InfdStatus::Io, format!("{path}: {e}")))?;
        let inner = TrainedModel::from_bytes(&bytes)?;
        *out = Box::into_raw(Box::new(InfdModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `data` must be valid for `len` bytes; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_model_from_bytes(data: *const u8, len: usize, out: *mut *mut InfdModel) -> InfdStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(data, "data")?;
        let inner = TrainedModel::from_bytes(std::slice::from_raw_parts(data, len))?;
        *out = Box::into_raw(Box::new(InfdModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn infd_model_free(model: *mut InfdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores bare text. `label` receives 0 (real) or 1 (fake); `score` the
/// decision value the label was thresholded from.
///
/// # Safety
/// `model` must be a live handle; `text` NUL-terminated; `label` and
/// `score` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_model_predict_text(
    model: *const InfdModel,
    text: *const c_char,
    label: *mut u8,
    score: *mut f64,
) -> InfdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(label, "label")?;
        non_null(score, "score")?;
        let text = str_arg(text, "text")?;
        let (l, s) = (*model).inner.score_text(text)?;
        *label = l.as_u8();
        *score = s;
        Ok(())
    })
}

/// JSON header of the model (kind, hyperparameters, seed, fingerprint).
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_model_header_json(model: *const InfdModel, out: *mut *mut c_char) -> InfdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let json = serde_json::to_string(&(*model).inner.header()).map_err(invalid)?;
        put_string(out, json)
    })
}

/// Text cleaning as applied before vectorization.
///
/// # Safety
/// `text` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_clean_text(text: *const c_char, out: *mut *mut c_char) -> InfdStatus {
    guard(|| {
        non_null(out, "out")?;
        put_string(out, clean_text(str_arg(text, "text")?))
    })
}

unsafe fn labels(p: *const u8, n: usize, name: &str) -> Result<Vec<Label>, Failure> {
    if n == 0 {
        return Ok(vec![]);
    }
    non_null(p, name)?;
    std::slice::from_raw_parts(p, n)
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            _ => Err(invalid(format!("{name}[{i}] = {b} is not a label"))),
        })
        .collect()
}

/// Binary metrics with fake (1) as the positive class. `macro_average`
/// averages precision, recall and F1 over both classes instead.
///
/// # Safety
/// `predicted` and `actual` must be valid for `n` bytes; `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_metrics(
    predicted: *const u8,
    actual: *const u8,
    n: usize,
    macro_average: bool,
    out: *mut InfdMetrics,
) -> InfdStatus {
    guard(|| {
        non_null(out, "out")?;
        let cm = confusion(&labels(predicted, n, "predicted")?, &labels(actual, n, "actual")?).map_err(invalid)?;
        let averaging = if macro_average { Averaging::Macro } else { Averaging::Binary };
        let m = metrics_with(&cm, averaging).map_err(invalid)?;
        *out = InfdMetrics {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            true_positives: cm.tp,
            false_positives: cm.fp,
            false_negatives: cm.fn_,
            true_negatives: cm.tn,
        };
        Ok(())
    })
}

/// Two-sided one-sample t-test against `mu0`; `alpha` is 0.05 or 0.01.
///
/// # Safety
/// `values` must be valid for `n` doubles; `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn infd_ttest(
    values: *const f64,
    n: usize,
    mu0: f64,
    alpha: f64,
    out: *mut InfdTTest,
) -> InfdStatus {
    guard(|| {
        non_null(out, "out")?;
        let values = if n == 0 {
            &[][..]
        } else {
            non_null(values, "values")?;
            std::slice::from_raw_parts(values, n)
        };
        let r = one_sample_ttest(values, mu0, alpha).map_err(invalid)?;
        *out = InfdTTest {
            n: r.n,
            mean: r.sample_mean,
            stddev: r.sample_stddev,
            t_statistic: r.t_statistic,
            critical_value: r.critical_value,
            reject_null: r.reject_null,
        };
        Ok(())
    })
}
