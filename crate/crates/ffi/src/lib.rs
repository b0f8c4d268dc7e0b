//! C interface to `volatix`.
//!
//! Every fallible function returns a [`VolatixStatus`]. On failure the
//! message is kept per thread and can be read with
//! [`volatix_last_error_message`]. Datasets and fits are opaque handles
//! released with their `_free` functions; strings returned through `char**`
//! out-parameters are released with [`volatix_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use volatix::estimation::{fit, information_criteria, FitResult};
use volatix::inference::{Perturbation, PerturbationMode, Predictor};
use volatix::kinematics::{volatility_indices, EventTrace};
use volatix::model::{choice_probabilities, scale_factor, AttributeTable, ChoiceDataset, ModelSpec};
use volatix::{Error, Outcome};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolatixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Schema, validation or parameter error.
    InvalidInput = 3,
    /// Join or consistency error, including use of an unconverged fit.
    Consistency = 4,
    /// Output buffer too small; the required length was written.
    BufferTooSmall = 5,
    Internal = 6,
}

/// Number of entries in a volatility vector.
pub const VOLATIX_N_INDICES: size_t = 10;

/// Raw event attributes (joined features and covariates).
pub struct VolatixDataset {
    table: AttributeTable,
}

/// Estimation result.
pub struct VolatixFit {
    result: FitResult,
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

fn status_of(e: &Error) -> VolatixStatus {
    match e {
        Error::Join { .. } | Error::NotFitted => VolatixStatus::Consistency,
        _ => VolatixStatus::InvalidInput,
    }
}

struct Failure(VolatixStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VolatixStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VolatixStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VolatixStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VolatixStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VolatixStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: size_t, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|_| Failure(VolatixStatus::Internal, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn outcome_arg(code: i32) -> Result<Outcome, Failure> {
    Outcome::from_index(code as usize)
        .filter(|_| code >= 0)
        .ok_or_else(|| Failure(VolatixStatus::InvalidInput, format!("outcome code {code} not in 0..=2")))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn volatix_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn volatix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn volatix_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Volatility indices of one trace. Outcome codes: 0 baseline,
/// 1 near-crash, 2 crash. Marker indices below zero mean "absent". Missing
/// components are written as NaN.
///
/// Output order: CV of longitudinal acceleration and deceleration, lateral
/// acceleration and deceleration, then positive and negative longitudinal
/// jerk, positive and negative lateral jerk, mean speed, CV of speed.
///
/// # Safety
/// The three series must each hold `n` values; `out` must hold 10.
#[no_mangle]
pub unsafe extern "C" fn volatix_volatility_indices(
    speed_kph: *const f64,
    accel_long: *const f64,
    accel_lat: *const f64,
    n: size_t,
    sample_period: f64,
    event_type: i32,
    reaction_index: i64,
    impact_index: i64,
    out: *mut f64,
) -> VolatixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let marker = |i: i64| usize::try_from(i).ok();
        let trace = EventTrace {
            event_id: "ffi".into(),
            event_type: outcome_arg(event_type)?,
            sample_period,
            speed: slice_arg(speed_kph, n, "speed")?.to_vec(),
            accel_longitudinal: slice_arg(accel_long, n, "accel_long")?.to_vec(),
            accel_lateral: slice_arg(accel_lat, n, "accel_lat")?.to_vec(),
            reaction_index: marker(reaction_index),
            impact_index: marker(impact_index),
        };
        let v = volatility_indices(&trace)?;
        let out = std::slice::from_raw_parts_mut(out, VOLATIX_N_INDICES);
        for (o, x) in out.iter_mut().zip(v.values()) {
            *o = x.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// σ = exp(−τ²/2 + θ·z + τ·ε0) for `m` scale covariates.
///
/// # Safety
/// `theta` and `z` must hold `m` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volatix_scale_factor(
    theta: *const f64,
    z: *const f64,
    m: size_t,
    tau: f64,
    eps0: f64,
    out: *mut f64,
) -> VolatixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = scale_factor(slice_arg(theta, m, "theta")?, slice_arg(z, m, "z")?, tau, eps0)?;
        Ok(())
    })
}

/// Logit probabilities for utilities (baseline, near-crash, crash).
///
/// # Safety
/// `utilities` and `out` must each hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn volatix_choice_probabilities(utilities: *const f64, out: *mut f64) -> VolatixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = slice_arg(utilities, 3, "utilities")?;
        let p = choice_probabilities([v[0], v[1], v[2]]);
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&p);
        Ok(())
    })
}

/// AIC and McFadden pseudo-R².
///
/// # Safety
/// `aic` and `pseudo_r2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volatix_information_criteria(
    loglik: f64,
    loglik_null: f64,
    k: size_t,
    aic: *mut f64,
    pseudo_r2: *mut f64,
) -> VolatixStatus {
    guard(|| {
        if aic.is_null() || pseudo_r2.is_null() {
            return Err(null("output pointer"));
        }
        let (a, r) = information_criteria(loglik, loglik_null, k)?;
        *aic = a;
        *pseudo_r2 = r;
        Ok(())
    })
}

/// Loads event attributes from CSV text, optionally joined with a feature
/// CSV from `volatix featurize`.
///
/// # Safety
/// String arguments must be NUL-terminated; `features_csv` may be null.
#[no_mangle]
pub unsafe extern "C" fn volatix_dataset_from_csv(
    attributes_csv: *const c_char,
    features_csv: *const c_char,
    out: *mut *mut VolatixDataset,
) -> VolatixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let attrs = str_arg(attributes_csv, "attributes_csv")?;
        let table = if features_csv.is_null() {
            volatix::io::read_attributes(attrs.as_bytes(), None)?
        } else {
            let features = volatix::io::read_features(str_arg(features_csv, "features_csv")?.as_bytes())?;
            let fallback = features.iter().map(|f| (f.event_id.clone(), f.event_type)).collect();
            let a = volatix::io::read_attributes(attrs.as_bytes(), Some(&fallback))?;
            volatix::io::join_features(&features, &a)?
        };
        *out = Box::into_raw(Box::new(VolatixDataset { table }));
        Ok(())
    })
}

/// Number of events, or 0 for null.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn volatix_dataset_len(dataset: *const VolatixDataset) -> size_t {
    dataset.as_ref().map_or(0, |d| d.table.rows.len())
}

/// # Safety
/// `dataset` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn volatix_dataset_free(dataset: *mut VolatixDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn choice_data(spec: &ModelSpec, d: &VolatixDataset) -> Result<ChoiceDataset, Failure> {
    Ok(ChoiceDataset::from_table(&d.table, spec)?)
}

/// Fits the model described by `spec_json`. Non-convergence is not an
/// error; check [`volatix_fit_converged`].
///
/// # Safety
/// `spec_json` must be NUL-terminated; `dataset` a live handle.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit(
    spec_json: *const c_char,
    dataset: *const VolatixDataset,
    out: *mut *mut VolatixFit,
) -> VolatixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = ModelSpec::from_json(str_arg(spec_json, "spec_json")?)?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let result = fit(&spec, &choice_data(&spec, d)?)?;
        *out = Box::into_raw(Box::new(VolatixFit { result }));
        Ok(())
    })
}

/// Restores a fit from its JSON form.
///
/// # Safety
/// `json` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit_from_json(json: *const c_char, out: *mut *mut VolatixFit) -> VolatixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let result = FitResult::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(VolatixFit { result }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit_to_json(fit: *const VolatixFit, out: *mut *mut c_char) -> VolatixStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        write_string(out, f.result.to_json()?)
    })
}

/// Table-style text summary.
///
/// # Safety
/// `fit` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit_summary(fit: *const VolatixFit, out: *mut *mut c_char) -> VolatixStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        write_string(out, f.result.summary())
    })
}

/// Log-likelihood, AIC and convergence flag; any output may be null.
///
/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit_statistics(
    fit: *const VolatixFit,
    loglik: *mut f64,
    aic: *mut f64,
    converged: *mut bool,
) -> VolatixStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.result;
        if !loglik.is_null() {
            *loglik = f.loglik;
        }
        if !aic.is_null() {
            *aic = f.aic;
        }
        if !converged.is_null() {
            *converged = f.converged;
        }
        Ok(())
    })
}

/// Copies the natural-scale estimates (in parameter-name order) into
/// `out`. With a short buffer, writes the required length to `needed` and
/// returns `BufferTooSmall`.
///
/// # Safety
/// `out` must hold `len` values; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit_estimates(
    fit: *const VolatixFit,
    out: *mut f64,
    len: size_t,
    needed: *mut size_t,
) -> VolatixStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.result;
        let k = f.parameters.len();
        if !needed.is_null() {
            *needed = k;
        }
        if len < k {
            return Err(Failure(VolatixStatus::BufferTooSmall, format!("need {k} values, got {len}")));
        }
        if k > 0 && out.is_null() {
            return Err(null("out"));
        }
        for (i, p) in f.parameters.iter().enumerate() {
            *out.add(i) = p.estimate;
        }
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn volatix_fit_free(fit: *mut VolatixFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

unsafe fn predictor_inputs<'a>(
    fit: *const VolatixFit,
    dataset: *const VolatixDataset,
) -> Result<(&'a FitResult, ChoiceDataset), Failure> {
    let f = &fit.as_ref().ok_or_else(|| null("fit"))?.result;
    let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
    Ok((f, choice_data(&f.spec, d)?))
}

/// Average marginal effects as JSON.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volatix_marginal_effects_json(
    fit: *const VolatixFit,
    dataset: *const VolatixDataset,
    force: bool,
    out: *mut *mut c_char,
) -> VolatixStatus {
    guard(|| {
        let (f, data) = predictor_inputs(fit, dataset)?;
        let table = Predictor::new(f, &data, force)?.marginal_effects();
        write_string(out, serde_json::to_string(&table).map_err(Error::from)?)
    })
}

/// Scenario report as CSV: a baseline row, then either the seven-step
/// scheme (`mode` < 0) or a single perturbation (`mode` 0 = percent,
/// 1 = SD) of `amount`. `denominator` 0 means the dataset size.
///
/// # Safety
/// Handles must be live; `covariate` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volatix_scenarios_csv(
    fit: *const VolatixFit,
    dataset: *const VolatixDataset,
    covariate: *const c_char,
    target: i32,
    mode: i32,
    amount: f64,
    denominator: size_t,
    force: bool,
    out: *mut *mut c_char,
) -> VolatixStatus {
    guard(|| {
        let (f, data) = predictor_inputs(fit, dataset)?;
        let cov = str_arg(covariate, "covariate")?;
        let target = outcome_arg(target)?;
        let perturbations = match mode {
            m if m < 0 => Perturbation::paper_scheme(cov, target),
            0 | 1 => vec![Perturbation {
                covariate: cov.to_string(),
                mode: if mode == 0 { PerturbationMode::Percent } else { PerturbationMode::Sd },
                amount,
                target,
            }],
            m => return Err(Failure(VolatixStatus::InvalidInput, format!("unknown mode {m}"))),
        };
        let denom = (denominator > 0).then_some(denominator);
        let report = Predictor::new(f, &data, force)?.scenarios(&perturbations, denom)?;
        write_string(out, report.to_csv()?)
    })
}
