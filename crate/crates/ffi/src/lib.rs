//! C ABI for `recap-rb`.
//!
//! Histories are opaque handles created by `recap_history_from_csv` or
//! `recap_history_from_matrix` and released with `recap_history_free`. Every fallible
//! call returns a [`RecapStatus`]; on failure the message is available from
//! `recap_last_error_message` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use recap_rb::estimators::{BootstrapConfig, Estimator, EstimatorResult, Evaluator};
use recap_rb::rb::{rb_exact, rb_mcmc, RbResult};
use recap_rb::rng::{derive_seed, purpose, substream};
use recap_rb::samplers::ChainOptions;
use recap_rb::suffstat::Model;
use recap_rb::{CaptureHistory, Error};

/// Opaque capture history.
pub struct RecapHistory(CaptureHistory);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecapModel {
    M0 = 0,
    Mh = 1,
    Mb = 2,
    Mt = 3,
}

impl From<RecapModel> for Model {
    fn from(m: RecapModel) -> Self {
        match m {
            RecapModel::M0 => Model::M0,
            RecapModel::Mh => Model::Mh,
            RecapModel::Mb => Model::Mb,
            RecapModel::Mt => Model::Mt,
        }
    }
}

/// A point estimate. `variance` is NaN when `has_variance` is false; `point` is NaN when
/// `valid` is false.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecapEstimate {
    pub point: f64,
    pub variance: f64,
    pub has_variance: bool,
    pub valid: bool,
}

/// A Rao-Blackwellized estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecapRbEstimate {
    pub point: f64,
    pub variance: f64,
    pub has_variance: bool,
    pub valid: bool,
    /// The variance fell back to the mean of per-state variances.
    pub fallback_used: bool,
    pub valid_fraction: f64,
    /// Fraction of accepted chain steps; NaN for exact averaging.
    pub acceptance_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RecapStatus, message: impl Into<String>) -> RecapStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> RecapStatus {
    let status = if e.is_input() { RecapStatus::InvalidInput } else { RecapStatus::Numerical };
    fail(status, e.to_string())
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), RecapStatus>) -> RecapStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RecapStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(RecapStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RecapStatus> {
    if p.is_null() {
        return Err(fail(RecapStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RecapStatus::InvalidInput, format!("`{name}` is not UTF-8")))
}

unsafe fn history_arg<'a>(h: *const RecapHistory) -> Result<&'a CaptureHistory, RecapStatus> {
    h.as_ref()
        .map(|h| &h.0)
        .ok_or_else(|| fail(RecapStatus::NullPointer, "`history` is null"))
}

fn out_arg<'a, T>(out: *mut T) -> Result<&'a mut T, RecapStatus> {
    // SAFETY: caller passes either null or a valid, writable pointer
    unsafe { out.as_mut() }.ok_or_else(|| fail(RecapStatus::NullPointer, "output pointer is null"))
}

fn estimator_arg(id: &str) -> Result<Estimator, RecapStatus> {
    id.parse().map_err(from_error)
}

fn evaluator(estimator: Estimator, seed: u64) -> Evaluator {
    Evaluator::new(vec![estimator], BootstrapConfig::default(), derive_seed(seed, &[purpose::CHAIN_VARIANCE]))
}

fn to_estimate(r: &EstimatorResult) -> RecapEstimate {
    RecapEstimate {
        point: r.point,
        variance: r.var.unwrap_or(f64::NAN),
        has_variance: r.var.is_some(),
        valid: r.is_valid(),
    }
}

fn to_rb(r: &RbResult, acceptance_rate: f64) -> RecapRbEstimate {
    RecapRbEstimate {
        point: r.point,
        variance: r.var.unwrap_or(f64::NAN),
        has_variance: r.var.is_some(),
        valid: r.is_valid(),
        fallback_used: r.fallback_used,
        valid_fraction: r.valid_fraction,
        acceptance_rate,
    }
}

fn store(out: *mut *mut RecapHistory, h: CaptureHistory) -> Result<(), RecapStatus> {
    *out_arg(out)? = Box::into_raw(Box::new(RecapHistory(h)));
    Ok(())
}

/// Parses a capture-history CSV (`unit,stratum,occ_1,...,occ_K`).
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn recap_history_from_csv(csv: *const c_char, out: *mut *mut RecapHistory) -> RecapStatus {
    guard(|| {
        out_arg(out)?;
        let text = str_arg(csv, "csv")?;
        store(out, CaptureHistory::from_csv_str(text).map_err(from_error)?)
    })
}

/// Builds a history from a row-major `units x occasions` matrix of 0/1 cells. Units are
/// labelled `1..=units`. `strata` holds one 1-based stratum per unit, or is null.
///
/// # Safety
/// `cells` must point to `units * occasions` bytes; `strata`, when not null, to `units`
/// values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recap_history_from_matrix(
    cells: *const u8,
    units: usize,
    occasions: usize,
    strata: *const u32,
    out: *mut *mut RecapHistory,
) -> RecapStatus {
    guard(|| {
        out_arg(out)?;
        if cells.is_null() {
            return Err(fail(RecapStatus::NullPointer, "`cells` is null"));
        }
        let len = units
            .checked_mul(occasions)
            .ok_or_else(|| fail(RecapStatus::InvalidInput, "matrix size overflows"))?;
        let flat = std::slice::from_raw_parts(cells, len);
        let matrix: Vec<Vec<u8>> = flat.chunks(occasions.max(1)).map(<[u8]>::to_vec).collect();
        let strata = (!strata.is_null()).then(|| std::slice::from_raw_parts(strata, units).to_vec());
        let labels = (1..=units).map(|i| i.to_string()).collect();
        let h = if units == 0 {
            CaptureHistory::new(labels, Vec::new(), occasions, strata)
        } else {
            CaptureHistory::from_matrix(labels, &matrix, strata)
        };
        store(out, h.map_err(from_error)?)
    })
}

/// Releases a history. Null is ignored.
///
/// # Safety
/// `history` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn recap_history_free(history: *mut RecapHistory) {
    if !history.is_null() {
        drop(Box::from_raw(history));
    }
}

/// Number of observed units, or 0 for null.
///
/// # Safety
/// `history` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn recap_history_units(history: *const RecapHistory) -> usize {
    history.as_ref().map_or(0, |h| h.0.n_units())
}

/// Number of occasions, or 0 for null.
///
/// # Safety
/// `history` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn recap_history_occasions(history: *const RecapHistory) -> usize {
    history.as_ref().map_or(0, |h| h.0.occasions())
}

/// Preliminary estimate. `estimator` is one of `lp`, `m0`, `chao`, `mb`, `mt`, `sc`;
/// `seed` drives resampled variances.
///
/// # Safety
/// `history` must be a live handle, `estimator` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn recap_estimate(
    history: *const RecapHistory,
    estimator: *const c_char,
    seed: u64,
    out: *mut RecapEstimate,
) -> RecapStatus {
    guard(|| {
        let h = history_arg(history)?;
        let estimator = estimator_arg(str_arg(estimator, "estimator")?)?;
        let result = evaluator(estimator, seed).evaluate(0, h);
        *out_arg(out)? = to_estimate(&result);
        Ok(())
    })
}

/// Rao-Blackwellized estimate from a chain of `chain_length` steps under `model`.
///
/// # Safety
/// As for [`recap_estimate`].
#[no_mangle]
pub unsafe extern "C" fn recap_rb_mcmc(
    history: *const RecapHistory,
    estimator: *const c_char,
    model: RecapModel,
    chain_length: usize,
    seed: u64,
    hastings_correction: bool,
    out: *mut RecapRbEstimate,
) -> RecapStatus {
    guard(|| {
        let h = history_arg(history)?;
        let estimator = estimator_arg(str_arg(estimator, "estimator")?)?;
        let options = ChainOptions { hastings_correction, ..ChainOptions::default() };
        let mut ev = evaluator(estimator, seed);
        let run = rb_mcmc(&mut ev, h, model.into(), chain_length, options, &mut substream(seed, &[purpose::CHAIN]))
            .map_err(from_error)?;
        *out_arg(out)? = to_rb(&run.results[0], run.acceptance_rate);
        Ok(())
    })
}

/// Rao-Blackwellized estimate averaged over every consistent reordering. Fails with
/// `InvalidInput` when the history is too large to enumerate.
///
/// # Safety
/// As for [`recap_estimate`].
#[no_mangle]
pub unsafe extern "C" fn recap_rb_exact(
    history: *const RecapHistory,
    estimator: *const c_char,
    model: RecapModel,
    seed: u64,
    out: *mut RecapRbEstimate,
) -> RecapStatus {
    guard(|| {
        let h = history_arg(history)?;
        let estimator = estimator_arg(str_arg(estimator, "estimator")?)?;
        let results = rb_exact(&mut evaluator(estimator, seed), h, model.into()).map_err(from_error)?;
        *out_arg(out)? = to_rb(&results[0], f64::NAN);
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn recap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn recap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
