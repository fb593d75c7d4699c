//! C ABI for the calibration toolkit.
//!
//! Conventions:
//! - Handles (`McnDataset`, `McnCalibrator`) are opaque; create them with
//!   the `mcn_*_load`/`mcn_dataset_generate`/`mcn_train` constructors and
//!   release them with the matching `mcn_*_free`.
//! - Every fallible function returns an [`McnStatus`]; on failure the
//!   thread-local message from [`mcn_last_error_message`] describes what
//!   went wrong.
//! - Strings are NUL-terminated UTF-8. Strings returned by the library
//!   are freed with [`mcn_string_free`]; never with `free(3)`.
//! - Configuration text uses the same `key = value` lines as the CLI
//!   config files.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use mcnet::dataset::{load_dataset, save_dataset, Dataset};
use mcnet::error::McnError;
use mcnet::experiment::{
    apply_synth_key, apply_train_key, evaluate_calibrator, fit_calibrator, parse_key_values,
    CalibratorKind,
};
use mcnet::mcnet::TrainConfig;
use mcnet::persist::{load_model, save_model, AnyCalibrator};
use mcnet::report::render_report;
use mcnet::synth::{generate, Distortion, SyntheticSpec, TrueProbability};
use mcnet::Sample;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McnStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// File could not be read or written.
    Io = 3,
    /// Dataset, config, or model text failed to parse.
    Parse = 4,
    /// Arguments were structurally invalid (bad config, shape mismatch,
    /// unknown field, score out of range).
    InvalidArgument = 5,
    /// Training failed (non-finite loss or rejected step).
    TrainingFailed = 6,
}

pub struct McnDataset(Dataset);

pub struct McnCalibrator(AnyCalibrator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &McnError) -> McnStatus {
    match err {
        McnError::Io(_) => McnStatus::Io,
        McnError::Parse { .. } | McnError::ModelFormat(_) => McnStatus::Parse,
        McnError::Training(_) | McnError::NonFinite(_) => McnStatus::TrainingFailed,
        _ => McnStatus::InvalidArgument,
    }
}

fn fail(err: McnError) -> McnStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// # Safety
/// `ptr` must be NULL or a NUL-terminated string valid for reads.
unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, McnStatus> {
    if ptr.is_null() {
        set_error(format!("{what} must not be NULL"));
        return Err(McnStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        McnStatus::InvalidUtf8
    })
}

fn null_check<T>(ptr: *const T, what: &str) -> Result<(), McnStatus> {
    if ptr.is_null() {
        set_error(format!("{what} must not be NULL"));
        return Err(McnStatus::NullPointer);
    }
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL when no
/// failure has been recorded. The pointer stays valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must have been returned by an `mcn_*` function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn mcn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a dataset from a CSV file (`score,label,field[,f0,...]`).
///
/// # Safety
/// `path` must be a readable NUL-terminated string; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mcn_dataset_load(
    path: *const c_char,
    out: *mut *mut McnDataset,
) -> McnStatus {
    if let Err(s) = null_check(out, "out") {
        return s;
    }
    let path = match required_str(path, "path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_dataset(Path::new(path)) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(McnDataset(ds)));
            McnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Generates a synthetic dataset from `key = value` config text
/// (keys: n, fields, distortions, distribution, seed, feature_dim).
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcn_dataset_generate(
    config: *const c_char,
    out: *mut *mut McnDataset,
) -> McnStatus {
    if let Err(s) = null_check(out, "out") {
        return s;
    }
    let text = match required_str(config, "config") {
        Ok(t) => t,
        Err(s) => return s,
    };
    let build = || -> Result<Dataset, McnError> {
        let map = parse_key_values(text)?;
        let mut spec = SyntheticSpec {
            n: 10_000,
            fields: 0,
            distortions: vec![Distortion::Identity],
            distribution: TrueProbability::Uniform,
            seed: 42,
            feature_dim: 0,
        };
        for (key, value) in &map {
            if !apply_synth_key(&mut spec, key, value)? {
                return Err(McnError::InvalidConfig(format!(
                    "unknown generator key {key:?}"
                )));
            }
        }
        if spec.fields == 0 {
            spec.fields = spec.distortions.len();
        }
        Ok(generate(&spec)?.0)
    };
    match build() {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(McnDataset(ds)));
            McnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Writes a dataset back to CSV.
///
/// # Safety
/// `dataset` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcn_dataset_save(
    dataset: *const McnDataset,
    path: *const c_char,
) -> McnStatus {
    if let Err(s) = null_check(dataset, "dataset") {
        return s;
    }
    let path = match required_str(path, "path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match save_dataset(&(*dataset).0, Path::new(path)) {
        Ok(()) => McnStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_dataset_len(dataset: *const McnDataset) -> usize {
    if dataset.is_null() {
        0
    } else {
        (*dataset).0.len()
    }
}

/// Declared field count; 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_dataset_field_count(dataset: *const McnDataset) -> usize {
    if dataset.is_null() {
        0
    } else {
        (*dataset).0.field_count
    }
}

/// Releases a dataset handle. NULL is a no-op.
///
/// # Safety
/// `dataset` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcn_dataset_free(dataset: *mut McnDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fits a calibrator on a validation dataset. `calibrator` is one of
/// histogram, isotonic, platt, sir, mcnet-none, mcnet-field. `config` is
/// optional (`NULL` for defaults) `key = value` text over the training
/// fields (bins, quad_steps, learning_rate, ...).
///
/// # Safety
/// `dataset` must be a live handle; strings NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mcn_train(
    dataset: *const McnDataset,
    calibrator: *const c_char,
    config: *const c_char,
    out: *mut *mut McnCalibrator,
) -> McnStatus {
    if let Err(s) = null_check(out, "out") {
        return s;
    }
    if let Err(s) = null_check(dataset, "dataset") {
        return s;
    }
    let kind_name = match required_str(calibrator, "calibrator") {
        Ok(k) => k,
        Err(s) => return s,
    };
    let config_text = if config.is_null() {
        ""
    } else {
        match required_str(config, "config") {
            Ok(t) => t,
            Err(s) => return s,
        }
    };
    let build = || -> Result<AnyCalibrator, McnError> {
        let kind: CalibratorKind = kind_name.parse()?;
        let mut train_config = TrainConfig::default();
        if kind == CalibratorKind::McnetField {
            train_config.learning_rate = TrainConfig::FIELD_LEARNING_RATE;
        }
        for (key, value) in &parse_key_values(config_text)? {
            if !apply_train_key(&mut train_config, key, value)? {
                return Err(McnError::InvalidConfig(format!(
                    "unknown training key {key:?}"
                )));
            }
        }
        fit_calibrator(kind, &(*dataset).0, &train_config)
    };
    match build() {
        Ok(cal) => {
            *out = Box::into_raw(Box::new(McnCalibrator(cal)));
            McnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Loads a saved model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mcn_calibrator_load(
    path: *const c_char,
    out: *mut *mut McnCalibrator,
) -> McnStatus {
    if let Err(s) = null_check(out, "out") {
        return s;
    }
    let path = match required_str(path, "path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_model(Path::new(path)) {
        Ok(cal) => {
            *out = Box::into_raw(Box::new(McnCalibrator(cal)));
            McnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Saves a calibrator to the versioned model format.
///
/// # Safety
/// `calibrator` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcn_calibrator_save(
    calibrator: *const McnCalibrator,
    path: *const c_char,
) -> McnStatus {
    if let Err(s) = null_check(calibrator, "calibrator") {
        return s;
    }
    let path = match required_str(path, "path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match save_model(&(*calibrator).0, Path::new(path)) {
        Ok(()) => McnStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Static name of the calibrator type ("histogram", "mcnet", ...). NULL
/// for a NULL handle.
///
/// # Safety
/// `calibrator` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_calibrator_type(calibrator: *const McnCalibrator) -> *const c_char {
    if calibrator.is_null() {
        return std::ptr::null();
    }
    match (*calibrator).0.type_name() {
        "histogram" => c"histogram".as_ptr(),
        "isotonic" => c"isotonic".as_ptr(),
        "platt" => c"platt".as_ptr(),
        "sir" => c"sir".as_ptr(),
        _ => c"mcnet".as_ptr(),
    }
}

/// Releases a calibrator handle. NULL is a no-op.
///
/// # Safety
/// `calibrator` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcn_calibrator_free(calibrator: *mut McnCalibrator) {
    if !calibrator.is_null() {
        drop(Box::from_raw(calibrator));
    }
}

/// Calibrates `len` scores with their field ids, writing calibrated
/// probabilities to `out`. Models trained in auxiliary mode need
/// [`mcn_calibrate_with_features`] instead.
///
/// # Safety
/// `scores`, `fields`, and `out` must point to `len` readable (writable
/// for `out`) elements; `calibrator` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_calibrate(
    calibrator: *const McnCalibrator,
    scores: *const f64,
    fields: *const u64,
    len: usize,
    out: *mut f64,
) -> McnStatus {
    mcn_calibrate_with_features(calibrator, scores, fields, std::ptr::null(), 0, len, out)
}

/// Calibrates scores with per-sample feature vectors for auxiliary-mode
/// models. `features` is row-major `len x feature_dim` (pass NULL and 0
/// when the model takes no features).
///
/// # Safety
/// All array pointers must cover the sizes implied by `len` and
/// `feature_dim`; `calibrator` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_calibrate_with_features(
    calibrator: *const McnCalibrator,
    scores: *const f64,
    fields: *const u64,
    features: *const f64,
    feature_dim: usize,
    len: usize,
    out: *mut f64,
) -> McnStatus {
    if let Err(s) = null_check(calibrator, "calibrator") {
        return s;
    }
    if len == 0 {
        return McnStatus::Ok;
    }
    for (ptr, name) in [(scores, "scores"), (out as *const f64, "out")] {
        if let Err(s) = null_check(ptr, name) {
            return s;
        }
    }
    if let Err(s) = null_check(fields, "fields") {
        return s;
    }
    if feature_dim > 0 {
        if let Err(s) = null_check(features, "features") {
            return s;
        }
    }
    let scores = std::slice::from_raw_parts(scores, len);
    let fields = std::slice::from_raw_parts(fields, len);
    let cal = &(*calibrator).0;
    for i in 0..len {
        let feature_vec = if feature_dim > 0 {
            std::slice::from_raw_parts(features.add(i * feature_dim), feature_dim).to_vec()
        } else {
            Vec::new()
        };
        let sample = Sample::with_features(scores[i], false, fields[i] as usize, feature_vec);
        match cal.calibrate_sample(&sample) {
            Ok(p) => *out.add(i) = p,
            Err(e) => return fail(e),
        }
    }
    McnStatus::Ok
}

/// Evaluates a calibrator on a dataset and returns the flat key-value
/// report text (free with [`mcn_string_free`]).
///
/// # Safety
/// `calibrator` and `dataset` must be live handles; `report_out` valid.
#[no_mangle]
pub unsafe extern "C" fn mcn_evaluate(
    calibrator: *const McnCalibrator,
    dataset: *const McnDataset,
    report_out: *mut *mut c_char,
) -> McnStatus {
    if let Err(s) = null_check(report_out, "report_out") {
        return s;
    }
    if let Err(s) = null_check(calibrator, "calibrator") {
        return s;
    }
    if let Err(s) = null_check(dataset, "dataset") {
        return s;
    }
    let cal = &(*calibrator).0;
    match evaluate_calibrator(cal, &(*dataset).0) {
        Ok(report) => {
            let text = render_report(cal.type_name(), &report);
            match CString::new(text) {
                Ok(c) => {
                    *report_out = c.into_raw();
                    McnStatus::Ok
                }
                Err(_) => {
                    set_error("report contained an interior NUL".into());
                    McnStatus::InvalidArgument
                }
            }
        }
        Err(e) => fail(e),
    }
}
