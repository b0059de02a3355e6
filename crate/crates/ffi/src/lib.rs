//! C ABI over the concept-induction engine.
//!
//! Sessions are opaque handles. Every fallible function returns a
//! [`CiStatus`]; on failure, [`ci_last_error`] describes the error on the
//! calling thread. Strings returned to the caller are freed with
//! [`ci_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use concept_induction::clustering::{hdbscan, HdbscanParams};
use concept_induction::eval::{classification_metrics, cohens_kappa};
use concept_induction::model::{
    load_session_file, save_session_file, validate_session, ClusterLabel, Session, SessionIoError,
};
use concept_induction::scoring::{session_outlier_fraction, set_threshold};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Unreadable, malformed or unsupported session file.
    SessionFormat = 4,
    InvalidArgument = 5,
    Clustering = 6,
    Panic = 99,
}

/// Opaque session handle.
pub struct CiSession {
    inner: Session,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CiMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// 1 when there were no positive predictions.
    pub precision_undefined: u8,
    /// 1 when there were no positive gold labels.
    pub recall_undefined: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CiStatus, msg: impl Into<String>) -> CiStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CiStatus) -> CiStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        fail(CiStatus::Panic, msg)
    })
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, CiStatus> {
    if p.is_null() {
        return Err(fail(CiStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(CiStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn io_status(e: &SessionIoError) -> CiStatus {
    match e {
        SessionIoError::File { .. } => CiStatus::Io,
        _ => CiStatus::SessionFormat,
    }
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ci_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version; static storage.
#[no_mangle]
pub extern "C" fn ci_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ci_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a session file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ci_session_load(path: *const c_char, out: *mut *mut CiSession) -> CiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CiStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_session_file(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CiSession { inner }));
                CiStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// Parses a session from JSON text into `*out`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ci_session_from_json(json: *const c_char, out: *mut *mut CiSession) -> CiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CiStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match concept_induction::model::load_session(text.as_bytes()) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CiSession { inner }));
                CiStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// Writes the session to `path`.
///
/// # Safety
/// `session` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ci_session_save(session: *const CiSession, path: *const c_char) -> CiStatus {
    guard(|| {
        let Some(s) = session.as_ref() else { return fail(CiStatus::NullArgument, "session is null") };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(st) => return st,
        };
        match save_session_file(&s.inner, Path::new(path)) {
            Ok(()) => CiStatus::Ok,
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// Session as JSON; free with [`ci_string_free`]. Null on failure.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ci_session_to_json(session: *const CiSession) -> *mut c_char {
    let mut out = ptr::null_mut();
    guard(|| {
        let Some(s) = session.as_ref() else { return fail(CiStatus::NullArgument, "session is null") };
        match serde_json::to_string(&s.inner) {
            Ok(j) => {
                out = to_c_string(j);
                CiStatus::Ok
            }
            Err(e) => fail(CiStatus::SessionFormat, e.to_string()),
        }
    });
    out
}

/// Checks session invariants. Writes the number of violations to
/// `*n_violations` and, when `report` is non-null, a JSON list of them to
/// `*report` (free with [`ci_string_free`]).
///
/// # Safety
/// `session` must be a live handle; out pointers writable or null.
#[no_mangle]
pub unsafe extern "C" fn ci_session_validate(
    session: *const CiSession,
    n_violations: *mut usize,
    report: *mut *mut c_char,
) -> CiStatus {
    guard(|| {
        let Some(s) = session.as_ref() else { return fail(CiStatus::NullArgument, "session is null") };
        if n_violations.is_null() {
            return fail(CiStatus::NullArgument, "n_violations is null");
        }
        let v = validate_session(&s.inner);
        *n_violations = v.len();
        if !report.is_null() {
            *report = to_c_string(serde_json::to_string(&v).unwrap_or_default());
        }
        CiStatus::Ok
    })
}

/// # Safety
/// `session` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ci_session_n_documents(session: *const CiSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.documents.len())
}

/// Number of active concepts.
///
/// # Safety
/// `session` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ci_session_n_concepts(session: *const CiSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.active_concepts().count())
}

/// Fraction of documents matched by no active concept; NaN for null.
///
/// # Safety
/// `session` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ci_session_outlier_fraction(session: *const CiSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| session_outlier_fraction(&s.inner))
}

/// Relabels every score with a new threshold in (0, 1].
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ci_session_set_threshold(session: *mut CiSession, threshold: f64) -> CiStatus {
    guard(|| {
        let Some(s) = session.as_mut() else { return fail(CiStatus::NullArgument, "session is null") };
        match set_threshold(&mut s.inner, threshold) {
            Ok(()) => CiStatus::Ok,
            Err(e) => fail(CiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `session` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ci_session_free(session: *mut CiSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn bools(p: *const u8, n: usize, name: &str) -> Result<Vec<bool>, CiStatus> {
    if p.is_null() {
        return Err(fail(CiStatus::NullArgument, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n).iter().map(|b| *b != 0).collect())
}

/// Accuracy, precision, recall and F1 of `predicted` against `gold`, each
/// `n` bytes where non-zero is positive.
///
/// # Safety
/// Both arrays must hold `n` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ci_classification_metrics(
    predicted: *const u8,
    gold: *const u8,
    n: usize,
    out: *mut CiMetrics,
) -> CiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CiStatus::NullArgument, "out is null");
        }
        let (p, g) = match (bools(predicted, n, "predicted"), bools(gold, n, "gold")) {
            (Ok(p), Ok(g)) => (p, g),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match classification_metrics(&p, &g) {
            Ok(m) => {
                *out = CiMetrics {
                    tp: m.counts.tp,
                    fp: m.counts.fp,
                    fn_: m.counts.fn_,
                    tn: m.counts.tn,
                    accuracy: m.accuracy,
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    precision_undefined: m.precision_undefined as u8,
                    recall_undefined: m.recall_undefined as u8,
                };
                CiStatus::Ok
            }
            Err(e) => fail(CiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Cohen's kappa between two raters of `n` binary labels.
///
/// # Safety
/// Both arrays must hold `n` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ci_cohens_kappa(labels_a: *const u8, labels_b: *const u8, n: usize, out: *mut f64) -> CiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CiStatus::NullArgument, "out is null");
        }
        let (a, b) = match (bools(labels_a, n, "labels_a"), bools(labels_b, n, "labels_b")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cohens_kappa(&a, &b) {
            Ok(k) => {
                *out = k.kappa;
                CiStatus::Ok
            }
            Err(e) => fail(CiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// HDBSCAN over `n` row-major points of dimension `dim`. Writes one label per
/// point to `labels` (-1 for noise). `min_samples` of 0 uses
/// `min_cluster_size`.
///
/// # Safety
/// `points` must hold `n * dim` doubles and `labels` room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn ci_hdbscan(
    points: *const f64,
    n: usize,
    dim: usize,
    min_cluster_size: usize,
    min_samples: usize,
    labels: *mut i64,
) -> CiStatus {
    guard(|| {
        if points.is_null() || labels.is_null() {
            return fail(CiStatus::NullArgument, "points or labels is null");
        }
        if dim == 0 {
            return fail(CiStatus::InvalidArgument, "dim must be at least 1");
        }
        let Some(len) = n.checked_mul(dim) else { return fail(CiStatus::InvalidArgument, "n * dim overflows") };
        let flat = std::slice::from_raw_parts(points, len);
        let vectors: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let params = HdbscanParams { min_samples: (min_samples > 0).then_some(min_samples), ..HdbscanParams::new(min_cluster_size) };
        match hdbscan(&vectors, &params) {
            Ok(c) => {
                let out = std::slice::from_raw_parts_mut(labels, n);
                for (o, l) in out.iter_mut().zip(&c.labels) {
                    *o = match l {
                        ClusterLabel::Cluster(k) => *k as i64,
                        ClusterLabel::Noise => -1,
                    };
                }
                CiStatus::Ok
            }
            Err(e) => fail(CiStatus::Clustering, e.to_string()),
        }
    })
}
