//! C ABI over the `ddrnn` library.
//!
//! Every function returns a [`DdrnnStatus`]. On failure a human-readable
//! message is kept per thread and can be fetched with
//! [`ddrnn_last_error_message`]. Models are opaque handles created by
//! [`ddrnn_model_new`] or [`ddrnn_model_load`] and released with
//! [`ddrnn_model_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ddrnn::cli::{evaluate_model, predict_model};
use ddrnn::data::load_dataset;
use ddrnn::model::{load_model, model_forward, save_model, AnyParams, SavedModel};
use ddrnn::training::{gradient_check, GradCheckSpec, MetricsReport};
use ddrnn::{Direction, Error, Field, GridDims, LabelMap, ModelConfig, ModelParams, Precision, Rng, Variant};

/// Result of every call. Values 1 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdrnnStatus {
    Ok = 0,
    CheckFailed = 1,
    InvalidArgument = 2,
    Io = 3,
    NonFinite = 4,
    Shape = 5,
    NullPointer = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdrnnVariant {
    Chain = 0,
    PlainDag = 1,
    DenseSum = 2,
    DenseAttention = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdrnnPrecision {
    Standard = 0,
    Extended = 1,
}

/// Bit flags selecting sweep directions.
pub const DDRNN_DIR_SE: u32 = 1;
pub const DDRNN_DIR_SW: u32 = 2;
pub const DDRNN_DIR_NE: u32 = 4;
pub const DDRNN_DIR_NW: u32 = 8;
pub const DDRNN_DIR_ALL: u32 = 15;

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdrnnModelInfo {
    pub in_channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub variant: u32,
    pub directions: u32,
    pub precision: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdrnnMetrics {
    pub gpa: f64,
    pub aca: f64,
    pub mean_iou: f64,
    /// Labelled units counted.
    pub total: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdrnnGradCheck {
    pub max_rel_error: f64,
    pub compared: usize,
    pub total: usize,
    pub passed: bool,
}

/// Opaque model handle.
pub struct DdrnnModel {
    inner: SavedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DdrnnStatus {
    match err {
        Error::InvalidArgument(_) => DdrnnStatus::InvalidArgument,
        Error::Io { .. } | Error::Format { .. } | Error::Empty(_) => DdrnnStatus::Io,
        Error::NonFinite(_) => DdrnnStatus::NonFinite,
        Error::Shape(_) => DdrnnStatus::Shape,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<DdrnnStatus, Fail>) -> DdrnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DdrnnStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            DdrnnStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: the caller guarantees a non-null pointer is valid for reads.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: the caller guarantees a non-null pointer is valid for writes.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the caller's contract, valid for `len` reads.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the caller's contract, valid for `len` writes.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the caller's contract, NUL-terminated.
    let s = unsafe { CStr::from_ptr(p) };
    let s = s.to_str().map_err(|_| Error::InvalidArgument(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn variant_of(v: DdrnnVariant) -> Variant {
    match v {
        DdrnnVariant::Chain => Variant::Chain,
        DdrnnVariant::PlainDag => Variant::PlainDag,
        DdrnnVariant::DenseSum => Variant::DenseSum,
        DdrnnVariant::DenseAttention => Variant::DenseAttention,
    }
}

fn ffi_variant(v: Variant) -> DdrnnVariant {
    match v {
        Variant::Chain => DdrnnVariant::Chain,
        Variant::PlainDag => DdrnnVariant::PlainDag,
        Variant::DenseSum => DdrnnVariant::DenseSum,
        Variant::DenseAttention => DdrnnVariant::DenseAttention,
    }
}

fn directions_of(mask: u32) -> Result<Vec<Direction>, Error> {
    if mask == 0 || mask & !DDRNN_DIR_ALL != 0 {
        return Err(Error::InvalidArgument(format!("invalid direction mask {mask:#x}")));
    }
    Ok(Direction::ALL.into_iter().filter(|d| mask & (1 << d.index()) != 0).collect())
}

fn mask_of(dirs: &[Direction]) -> u32 {
    dirs.iter().fold(0, |m, d| m | (1 << d.index()))
}

fn features_from(rows: usize, cols: usize, channels: usize, data: &[f64]) -> Result<Field<f64>, Error> {
    Field::from_vec(GridDims::new(rows, cols)?, channels, data.to_vec())
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ddrnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates a freshly initialised model. `directions` is a mask of
/// `DDRNN_DIR_*` flags.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_new(
    in_channels: usize,
    hidden: usize,
    classes: usize,
    variant: DdrnnVariant,
    directions: u32,
    precision: DdrnnPrecision,
    seed: u64,
    out: *mut *mut DdrnnModel,
) -> DdrnnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let config = ModelConfig::new(in_channels, hidden, classes, variant_of(variant), &directions_of(directions)?)?;
        let p64 = ModelParams::<f64>::init(&config, &mut Rng::new(seed));
        let params = match precision {
            DdrnnPrecision::Standard => AnyParams::Standard(p64.cast()),
            DdrnnPrecision::Extended => AnyParams::Extended(p64),
        };
        *out = Box::into_raw(Box::new(DdrnnModel { inner: SavedModel { config, params } }));
        Ok(DdrnnStatus::Ok)
    })
}

/// Loads a model directory written by [`ddrnn_model_save`] or `ddrnn train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_load(dir: *const c_char, out: *mut *mut DdrnnModel) -> DdrnnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = load_model(path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(DdrnnModel { inner }));
        Ok(DdrnnStatus::Ok)
    })
}

/// # Safety
/// `model` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_save(model: *const DdrnnModel, dir: *const c_char) -> DdrnnStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        save_model(path_arg(dir, "dir")?, &model.inner)?;
        Ok(DdrnnStatus::Ok)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_free(model: *mut DdrnnModel) {
    if !model.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// `model` must be a live handle; `info` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_info(model: *const DdrnnModel, info: *mut DdrnnModelInfo) -> DdrnnStatus {
    guard(|| {
        let m = &non_null(model, "model")?.inner;
        let info = out_ref(info, "info")?;
        *info = DdrnnModelInfo {
            in_channels: m.config.in_channels,
            hidden: m.config.hidden,
            classes: m.config.classes,
            variant: ffi_variant(m.config.variant) as u32,
            directions: mask_of(&m.config.directions),
            precision: match m.params.precision() {
                Precision::Standard => DdrnnPrecision::Standard as u32,
                Precision::Extended => DdrnnPrecision::Extended as u32,
            },
        };
        Ok(DdrnnStatus::Ok)
    })
}

/// Class probabilities for an `rows×cols` grid. `features` holds
/// `rows·cols·in_channels` values unit-major (channels of a unit adjacent,
/// units row-major); `probs` receives `rows·cols·classes` values in the same
/// layout.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_forward(
    model: *const DdrnnModel,
    rows: usize,
    cols: usize,
    features: *const f64,
    features_len: usize,
    probs: *mut f64,
    probs_len: usize,
) -> DdrnnStatus {
    guard(|| {
        let m = &non_null(model, "model")?.inner;
        let x = features_from(rows, cols, m.config.in_channels, slice(features, features_len, "features")?)?;
        let out = slice_mut(probs, probs_len, "probs")?;
        let want = rows * cols * m.config.classes;
        if out.len() != want {
            return Err(Error::Shape(format!("probs buffer holds {}, need {want}", out.len())).into());
        }
        match &m.params {
            AnyParams::Standard(p) => {
                let t = model_forward(&x.cast::<f32>(), &m.config, p)?;
                out.iter_mut().zip(t.probs.as_slice()).for_each(|(o, &v)| *o = v as f64);
            }
            AnyParams::Extended(p) => {
                let t = model_forward(&x, &m.config, p)?;
                out.copy_from_slice(t.probs.as_slice());
            }
        }
        Ok(DdrnnStatus::Ok)
    })
}

/// Argmax labels (ties to the lowest class) for an `rows×cols` grid.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_predict(
    model: *const DdrnnModel,
    rows: usize,
    cols: usize,
    features: *const f64,
    features_len: usize,
    labels: *mut u8,
    labels_len: usize,
) -> DdrnnStatus {
    guard(|| {
        let m = &non_null(model, "model")?.inner;
        let x = features_from(rows, cols, m.config.in_channels, slice(features, features_len, "features")?)?;
        let out = slice_mut(labels, labels_len, "labels")?;
        if out.len() != rows * cols {
            return Err(Error::Shape(format!("labels buffer holds {}, need {}", out.len(), rows * cols)).into());
        }
        out.copy_from_slice(predict_model(m, &x)?.as_slice());
        Ok(DdrnnStatus::Ok)
    })
}

/// Metrics of `model` over a dataset directory.
///
/// # Safety
/// `model` must be a live handle, `data_dir` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_model_evaluate(
    model: *const DdrnnModel,
    data_dir: *const c_char,
    out: *mut DdrnnMetrics,
) -> DdrnnStatus {
    guard(|| {
        let m = &non_null(model, "model")?.inner;
        let out = out_ref(out, "out")?;
        let samples = load_dataset(path_arg(data_dir, "data_dir")?)?;
        *out = metrics_of(&evaluate_model(m, &samples)?);
        Ok(DdrnnStatus::Ok)
    })
}

fn metrics_of(r: &MetricsReport) -> DdrnnMetrics {
    DdrnnMetrics { gpa: r.gpa, aca: r.aca, mean_iou: r.mean_iou, total: r.confusion.total() }
}

/// Metrics of one flat pair of label arrays; label 255 is ignored.
///
/// # Safety
/// `truth` and `pred` must be valid for `len` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_metrics_from_labels(
    classes: usize,
    truth: *const u8,
    pred: *const u8,
    len: usize,
    out: *mut DdrnnMetrics,
) -> DdrnnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let dims = GridDims::new(1, len)?;
        let t = LabelMap::new(dims, slice(truth, len, "truth")?.to_vec())?;
        let p = LabelMap::new(dims, slice(pred, len, "pred")?.to_vec())?;
        *out = metrics_of(&MetricsReport::from_maps(classes, [(&t, &p)])?);
        Ok(DdrnnStatus::Ok)
    })
}

/// Finite-difference gradient check on the standard small instance for one
/// variant and a single direction flag. Returns `CheckFailed` when the
/// tolerance is exceeded; `out` is filled either way.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ddrnn_gradient_check(
    variant: DdrnnVariant,
    direction: u32,
    seed: u64,
    eps: f64,
    tol: f64,
    out: *mut DdrnnGradCheck,
) -> DdrnnStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let dirs = directions_of(direction)?;
        if dirs.len() != 1 {
            return Err(Error::InvalidArgument("exactly one direction flag is required".into()).into());
        }
        let mut spec = GradCheckSpec::standard(variant_of(variant), dirs[0], seed);
        spec.eps = eps;
        spec.tol = tol;
        let r = gradient_check(&spec)?;
        *out = DdrnnGradCheck { max_rel_error: r.max_rel_error, compared: r.compared, total: r.total, passed: r.passed };
        Ok(if r.passed { DdrnnStatus::Ok } else { DdrnnStatus::CheckFailed })
    })
}
