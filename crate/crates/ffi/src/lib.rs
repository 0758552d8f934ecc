//! C ABI over the embprop library.
//!
//! Every fallible function returns an [`EpStatus`]; on failure the message is
//! kept per thread and can be read with [`ep_last_error_message`]. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use embprop::classify::{label_propagation_scores, LabelMatrix};
use embprop::diagnostics::two_moons;
use embprop::episodes::evaluate_with_threads;
use embprop::io::{load_embeddings, EmbeddingFormat};
use embprop::propagation::propagate_embeddings;
use embprop::{
    Classifier, DenseMatrix, EmbeddingSet, Error, EvalConfig, EvalReport, GraphConfig,
    PropagationMode, SslMode,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvariantViolation = 5,
    DimensionMismatch = 6,
    /// Graph or solver failure: non-symmetric, not positive definite,
    /// isolated node, non-finite input.
    Numerical = 7,
    /// Not enough classes, rows or labels for the request.
    InsufficientData = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpFormat {
    Auto = 0,
    Csv = 1,
    Binary = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpMode {
    Full = 0,
    OffDiagonal = 1,
    Diagonal = 2,
    Identity = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpClassifier {
    LabelProp = 0,
    Prototypical = 1,
}

/// Evaluation settings. Start from [`ep_eval_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpEvalConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub u_unlabeled: usize,
    pub labeled_fraction: f64,
    pub episodes: usize,
    pub alpha: f64,
    /// NaN reuses `alpha`.
    pub lp_alpha: f64,
    pub mode: EpMode,
    pub classifier: EpClassifier,
    /// Nonzero enables two-pass pseudo-labeling.
    pub ssl: u8,
    pub seed: u64,
    /// 0 uses the default pool.
    pub threads: usize,
}

/// Opaque embedding set.
pub struct EpEmbeddingSet {
    inner: EmbeddingSet,
}

/// Opaque evaluation report.
pub struct EpReport {
    inner: EvalReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> EpStatus {
    match err {
        Error::InvalidConfig(_) => EpStatus::InvalidArgument,
        Error::Io(_) => EpStatus::Io,
        Error::Parse { .. } | Error::Json(_) => EpStatus::Parse,
        Error::InvariantViolation(_) => EpStatus::InvariantViolation,
        Error::DimensionMismatch(_) => EpStatus::DimensionMismatch,
        Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::NonFiniteInput { .. }
        | Error::InvalidDistanceMatrix(_)
        | Error::IsolatedNode { .. } => EpStatus::Numerical,
        Error::EmptyClass { .. }
        | Error::LabelOutOfRange { .. }
        | Error::InsufficientClassSize { .. }
        | Error::InsufficientClassCount { .. }
        | Error::NoUnlabeledPool
        | Error::SameClassPair { .. } => EpStatus::InsufficientData,
    }
}

struct Failure(EpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EpStatus::Panic
        }
    }
}

fn mode_of(mode: EpMode) -> PropagationMode {
    match mode {
        EpMode::Full => PropagationMode::Full,
        EpMode::OffDiagonal => PropagationMode::OffDiagonalOnly,
        EpMode::Diagonal => PropagationMode::DiagonalOnly,
        EpMode::Identity => PropagationMode::Identity,
    }
}

/// Row-major `rows × cols` matrix from a caller buffer.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles.
unsafe fn matrix_from(data: *const f64, rows: usize, cols: usize) -> Result<DenseMatrix, Failure> {
    if data.is_null() {
        return Err(null("input matrix"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(EpStatus::InvalidArgument, "matrix size overflows".into()))?;
    Ok(DenseMatrix::new(rows, cols, slice::from_raw_parts(data, len).to_vec())?)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ep_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ep_eval_config_default() -> EpEvalConfig {
    let d = EvalConfig::default();
    EpEvalConfig {
        n_way: d.n_way,
        k_shot: d.k_shot,
        q_queries: d.q_queries,
        u_unlabeled: d.u_unlabeled,
        labeled_fraction: d.labeled_fraction,
        episodes: d.episodes,
        alpha: d.graph.alpha,
        lp_alpha: f64::NAN,
        mode: EpMode::Full,
        classifier: EpClassifier::LabelProp,
        ssl: 0,
        seed: d.seed,
        threads: 0,
    }
}

/// Loads an embedding file. `path` is a NUL-terminated UTF-8 path.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ep_embeddings_load(
    path: *const c_char,
    format: EpFormat,
    out: *mut *mut EpEmbeddingSet,
) -> EpStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(EpStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let format = match format {
            EpFormat::Auto => EmbeddingFormat::Auto,
            EpFormat::Csv => EmbeddingFormat::Csv,
            EpFormat::Binary => EmbeddingFormat::Binary,
        };
        let inner = load_embeddings(path, format)?;
        *out = Box::into_raw(Box::new(EpEmbeddingSet { inner }));
        Ok(())
    })
}

/// Two-moons set with `n_per_moon` points per moon.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ep_embeddings_two_moons(
    n_per_moon: usize,
    noise_sd: f64,
    seed: u64,
    out: *mut *mut EpEmbeddingSet,
) -> EpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = two_moons(n_per_moon, noise_sd, seed)?;
        *out = Box::into_raw(Box::new(EpEmbeddingSet { inner }));
        Ok(())
    })
}

/// # Safety
/// `set` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ep_embeddings_free(set: *mut EpEmbeddingSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of rows, 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_embeddings_rows(set: *const EpEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.len())
}

/// Embedding dimension, 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_embeddings_dim(set: *const EpEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.dim())
}

/// Propagates `rows × cols` row-major embeddings as one batch into `out`
/// (same shape).
///
/// # Safety
/// `z` and `out` must each hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn ep_propagate(
    z: *const f64,
    rows: usize,
    cols: usize,
    alpha: f64,
    mode: EpMode,
    out: *mut f64,
) -> EpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let z = matrix_from(z, rows, cols)?;
        let cfg = GraphConfig::with_alpha(alpha);
        cfg.validate()?;
        let (zt, _) = propagate_embeddings(&z, &cfg, mode_of(mode))?;
        slice::from_raw_parts_mut(out, rows * cols).copy_from_slice(zt.as_slice());
        Ok(())
    })
}

/// Label-propagation scores for a batch. `labels[i]` is the class of row
/// `i`, or negative for unlabeled. Writes `rows × n_classes` scores.
///
/// # Safety
/// `z` holds `rows * cols` doubles, `labels` holds `rows` entries and `out`
/// has room for `rows * n_classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn ep_label_propagation(
    z: *const f64,
    rows: usize,
    cols: usize,
    labels: *const i32,
    n_classes: usize,
    alpha: f64,
    out: *mut f64,
) -> EpStatus {
    guard(|| {
        if labels.is_null() {
            return Err(null("labels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let z = matrix_from(z, rows, cols)?;
        let assignments: Vec<Option<usize>> = slice::from_raw_parts(labels, rows)
            .iter()
            .map(|&l| usize::try_from(l).ok())
            .collect();
        let labels = LabelMatrix::from_assignments(&assignments, n_classes)?;
        let cfg = GraphConfig::with_alpha(alpha);
        cfg.validate()?;
        let scores = label_propagation_scores(&z, &labels, &cfg)?;
        slice::from_raw_parts_mut(out, rows * n_classes).copy_from_slice(scores.matrix.as_slice());
        Ok(())
    })
}

fn eval_config(c: &EpEvalConfig) -> EvalConfig {
    EvalConfig {
        n_way: c.n_way,
        k_shot: c.k_shot,
        q_queries: c.q_queries,
        u_unlabeled: c.u_unlabeled,
        labeled_fraction: c.labeled_fraction,
        episodes: c.episodes,
        graph: GraphConfig::with_alpha(c.alpha),
        lp_alpha: (!c.lp_alpha.is_nan()).then_some(c.lp_alpha),
        mode: mode_of(c.mode),
        classifier: match c.classifier {
            EpClassifier::LabelProp => Classifier::LabelProp,
            EpClassifier::Prototypical => Classifier::Prototypical,
        },
        ssl: if c.ssl != 0 { SslMode::PseudoLabel } else { SslMode::Off },
        seed: c.seed,
        split: None,
    }
}

/// Runs an episodic evaluation.
///
/// # Safety
/// `set` and `config` must be live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ep_evaluate(
    set: *const EpEmbeddingSet,
    config: *const EpEvalConfig,
    out: *mut *mut EpReport,
) -> EpStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let threads = (config.threads > 0).then_some(config.threads);
        let inner = evaluate_with_threads(&set.inner, &eval_config(config), threads)?;
        *out = Box::into_raw(Box::new(EpReport { inner }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_report_mean(report: *const EpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.mean)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_report_ci95(report: *const EpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.ci95)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_report_episodes(report: *const EpReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.episodes)
}

/// Copies up to `capacity` per-episode accuracies into `buf` and returns the
/// total number available.
///
/// # Safety
/// `report` must be null or live; `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ep_report_accuracies(
    report: *const EpReport,
    buf: *mut f64,
    capacity: usize,
) -> usize {
    let Some(r) = report.as_ref() else { return 0 };
    let acc = &r.inner.accuracies;
    if !buf.is_null() {
        let n = acc.len().min(capacity);
        slice::from_raw_parts_mut(buf, n).copy_from_slice(&acc[..n]);
    }
    acc.len()
}

/// Report as a JSON string; free with [`ep_string_free`]. Null on failure.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_report_to_json(report: *const EpReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_error("report is null");
        return ptr::null_mut();
    };
    match serde_json::to_string(&r.inner) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must come from [`ep_report_to_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `report` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ep_report_free(report: *mut EpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
