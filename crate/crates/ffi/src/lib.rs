//! C ABI for `bsl-core`.
//!
//! Every function returns a status code: `BSL_OK` on success, otherwise one
//! of the `BSL_ERR_*` values. After a failure, `bsl_last_error_message`
//! describes it. Results are written through out-pointers. Systems and
//! ledgers are opaque handles released with their `*_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bsl_core::bayes::grid_update;
use bsl_core::bounds::{pointwise_k, BoundLedger, LedgerVariant};
use bsl_core::metrics;
use bsl_core::models::system_constants;
use bsl_core::onlinevi::{vi_bound_type1, VIBoundInputs};
use bsl_core::{
    Distribution, DomainSpec, Error, Gaussian1D, GridDensity, LikelihoodModel, MetricKind, SystemSpec, TransitionModel,
};

pub const BSL_OK: i32 = 0;
pub const BSL_ERR_INVALID_DOMAIN: i32 = 1;
pub const BSL_ERR_INVALID_PARAMETER: i32 = 2;
pub const BSL_ERR_DOMAIN_TOO_SMALL: i32 = 3;
pub const BSL_ERR_UNNORMALIZED: i32 = 4;
pub const BSL_ERR_UNSUPPORTED_REPRESENTATION: i32 = 5;
pub const BSL_ERR_DOMAIN_MISMATCH: i32 = 6;
pub const BSL_ERR_NON_FINITE: i32 = 7;
pub const BSL_ERR_UNBOUNDED_CONSTANT: i32 = 8;
pub const BSL_ERR_ZERO_EVIDENCE: i32 = 9;
pub const BSL_ERR_DEGENERATE_VARIANCE: i32 = 10;
pub const BSL_ERR_ALL_WEIGHTS_ZERO: i32 = 11;
pub const BSL_ERR_MISSING_CONSTANT: i32 = 12;
pub const BSL_ERR_VACUOUS_BOUND: i32 = 13;
pub const BSL_ERR_MISSING_DIAMETER: i32 = 14;
pub const BSL_ERR_IO: i32 = 15;
pub const BSL_ERR_CONFIG: i32 = 16;
/// A required pointer argument was null.
pub const BSL_ERR_NULL_POINTER: i32 = 100;
/// The library panicked; this is a bug.
pub const BSL_ERR_PANIC: i32 = 101;

pub const BSL_METRIC_TV: u32 = 0;
pub const BSL_METRIC_HELLINGER: u32 = 1;
pub const BSL_METRIC_W1: u32 = 2;

/// Evidences of the exact sequence.
pub const BSL_LEDGER_SET1: u32 = 1;
/// Evidences of the approximate sequence.
pub const BSL_LEDGER_SET2: u32 = 2;

/// A one-dimensional inverse or state-estimation system on a grid.
pub struct BslSystem(SystemSpec);

/// A learning-error ledger.
pub struct BslLedger(BoundLedger);

/// Step-`k` model constants. Entries that do not apply to the system or
/// metric are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BslConstants {
    pub c_h: f64,
    pub h_lip: f64,
    pub c_th: f64,
    pub c_th_star: f64,
    pub diameter: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BSL_OK,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            e.code()
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BSL_ERR_NULL_POINTER
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BSL_ERR_PANIC
        }
    }
}

fn metric(m: u32) -> Result<MetricKind, Failure> {
    match m {
        BSL_METRIC_TV => Ok(MetricKind::Tv),
        BSL_METRIC_HELLINGER => Ok(MetricKind::Hellinger),
        BSL_METRIC_W1 => Ok(MetricKind::W1),
        _ => Err(Error::InvalidParameter(format!("unknown metric {m}")).into()),
    }
}

/// # Safety
/// `p` must be null or valid for `n` reads.
unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or valid for a write.
unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(v);
    Ok(())
}

/// # Safety
/// `p` must be null or a live handle.
unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Message for the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bsl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Inverse problem `y = a x + N(0, noise_var)` on `[lower, upper]`.
///
/// # Safety
/// `data` must be valid for `n_data` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_system_new_inverse(
    a: f64,
    noise_var: f64,
    lower: f64,
    upper: f64,
    grid_points: usize,
    data: *const f64,
    n_data: usize,
    out: *mut *mut BslSystem,
) -> i32 {
    guard(|| {
        let d = DomainSpec::new(lower, upper, grid_points)?;
        let s = SystemSpec::inverse(LikelihoodModel::linear_gaussian(a, noise_var)?, d, slice(data, n_data, "data")?.to_vec())?;
        write(out, Box::into_raw(Box::new(BslSystem(s))), "out")
    })
}

/// State estimation with transition `N(trans_a x', trans_var)` and
/// observation `y = a x + N(0, noise_var)`.
///
/// # Safety
/// `data` must be valid for `n_data` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_system_new_state_estimation(
    trans_a: f64,
    trans_var: f64,
    a: f64,
    noise_var: f64,
    lower: f64,
    upper: f64,
    grid_points: usize,
    data: *const f64,
    n_data: usize,
    out: *mut *mut BslSystem,
) -> i32 {
    guard(|| {
        let d = DomainSpec::new(lower, upper, grid_points)?;
        let s = SystemSpec::state_estimation(
            TransitionModel::linear_gaussian(trans_a, trans_var)?,
            LikelihoodModel::linear_gaussian(a, noise_var)?,
            d,
            slice(data, n_data, "data")?.to_vec(),
        )?;
        write(out, Box::into_raw(Box::new(BslSystem(s))), "out")
    })
}

/// # Safety
/// `sys` must be null or a handle from a `bsl_system_new_*` function that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bsl_system_free(sys: *mut BslSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of grid nodes of the system's domain.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_system_grid_points(sys: *const BslSystem, out: *mut usize) -> i32 {
    guard(|| write(out, handle(sys, "sys")?.0.domain().grid_points(), "out"))
}

/// # Safety
/// `sys` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_system_constants(sys: *const BslSystem, k: usize, metric_id: u32, out: *mut BslConstants) -> i32 {
    guard(|| {
        let c = system_constants(&handle(sys, "sys")?.0, k, metric(metric_id)?)?;
        let nan = f64::NAN;
        let r = BslConstants {
            c_h: c.c_h,
            h_lip: c.h_lip.unwrap_or(nan),
            c_th: c.c_th.unwrap_or(nan),
            c_th_star: c.c_th_star.unwrap_or(nan),
            diameter: c.diameter,
        };
        write(out, r, "out")
    })
}

/// Step constant `K(mu; y_k)` for a prior with evidence `evidence`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_step_constant(
    sys: *const BslSystem,
    k: usize,
    metric_id: u32,
    evidence: f64,
    out: *mut f64,
) -> i32 {
    guard(|| write(out, pointwise_k(&handle(sys, "sys")?.0, k, metric(metric_id)?, evidence)?, "out"))
}

/// Exact grid update of a normalized prior density given on the system's
/// nodes. `prior` and `posterior` hold `grid_points` values each.
///
/// # Safety
/// `sys` must be a live handle, `prior` valid for `n` reads, `posterior`
/// for `n` writes and `evidence` for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_grid_update(
    sys: *const BslSystem,
    k: usize,
    prior: *const f64,
    n: usize,
    posterior: *mut f64,
    evidence: *mut f64,
) -> i32 {
    guard(|| {
        let s = &handle(sys, "sys")?.0;
        let d = *s.domain();
        if n != d.grid_points() {
            return Err(Error::DomainMismatch.into());
        }
        let p = GridDensity::normalize_from(d, slice(prior, n, "prior")?.to_vec())?;
        let up = grid_update(s, k, &p.into())?;
        let Distribution::Grid(g) = up.posterior else {
            return Err(Error::UnsupportedRepresentation("expected a grid posterior".into()).into());
        };
        if posterior.is_null() {
            return Err(Failure::Null("posterior"));
        }
        std::slice::from_raw_parts_mut(posterior, n).copy_from_slice(g.values());
        write(evidence, up.evidence, "evidence")
    })
}

/// Closed-form TV or Hellinger distance between two Gaussians; W1 is
/// computed on `[lower, upper]` with `grid_points` nodes (ignored otherwise).
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_gaussian_distance(
    metric_id: u32,
    mean_a: f64,
    var_a: f64,
    mean_b: f64,
    var_b: f64,
    lower: f64,
    upper: f64,
    grid_points: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let m = metric(metric_id)?;
        let (a, b) = (Gaussian1D::new(mean_a, var_a)?, Gaussian1D::new(mean_b, var_b)?);
        let v = match m {
            MetricKind::Tv => metrics::gaussian_tv(&a, &b),
            MetricKind::Hellinger => metrics::gaussian_hellinger(&a, &b),
            MetricKind::W1 => {
                let d = DomainSpec::new(lower, upper, grid_points)?;
                metrics::distance(m, &a.into(), &b.into(), &d)?.value
            }
        };
        write(out, v, "out")
    })
}

/// Distance between two normalized densities on the same grid.
///
/// # Safety
/// `a` and `b` must be valid for `grid_points` reads and `out` for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn bsl_grid_distance(
    metric_id: u32,
    lower: f64,
    upper: f64,
    grid_points: usize,
    a: *const f64,
    b: *const f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let m = metric(metric_id)?;
        let d = DomainSpec::new(lower, upper, grid_points)?;
        let ga = GridDensity::normalize_from(d, slice(a, grid_points, "a")?.to_vec())?;
        let gb = GridDensity::normalize_from(d, slice(b, grid_points, "b")?.to_vec())?;
        write(out, metrics::distance(m, &ga.into(), &gb.into(), &d)?.value, "out")
    })
}

/// Ledger `B_k = K_k B_{k-1} + eps_k` from per-step constants and
/// incremental errors, summing from step `window_start` (1 for the full
/// history) and starting from `initial`.
///
/// # Safety
/// `step_constants` and `eps` must be valid for `n` reads and `out` for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn bsl_ledger_new(
    metric_id: u32,
    variant: u32,
    step_constants: *const f64,
    eps: *const f64,
    n: usize,
    window_start: usize,
    initial: f64,
    out: *mut *mut BslLedger,
) -> i32 {
    guard(|| {
        let v = match variant {
            BSL_LEDGER_SET1 => LedgerVariant::Set1,
            BSL_LEDGER_SET2 => LedgerVariant::Set2,
            _ => return Err(Error::InvalidParameter(format!("unknown ledger variant {variant}")).into()),
        };
        let l = BoundLedger::from_constants(
            metric(metric_id)?,
            v,
            slice(step_constants, n, "step_constants")?,
            slice(eps, n, "eps")?,
            window_start,
            initial,
        )?;
        write(out, Box::into_raw(Box::new(BslLedger(l))), "out")
    })
}

/// # Safety
/// `ledger` must be null or a live handle from `bsl_ledger_new`.
#[no_mangle]
pub unsafe extern "C" fn bsl_ledger_free(ledger: *mut BslLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// # Safety
/// `ledger` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_ledger_len(ledger: *const BslLedger, out: *mut usize) -> i32 {
    guard(|| write(out, handle(ledger, "ledger")?.0.records.len(), "out"))
}

/// Cumulative bound after step `k` (1-based).
///
/// # Safety
/// `ledger` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_ledger_bound(ledger: *const BslLedger, k: usize, out: *mut f64) -> i32 {
    guard(|| {
        let l = &handle(ledger, "ledger")?.0;
        let r = k
            .checked_sub(1)
            .and_then(|i| l.records.get(i))
            .ok_or_else(|| Error::InvalidParameter(format!("step {k} outside 1..={}", l.records.len())))?;
        write(out, r.cum_bound, "out")
    })
}

/// # Safety
/// `ledger` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_ledger_final_bound(ledger: *const BslLedger, out: *mut f64) -> i32 {
    guard(|| write(out, handle(ledger, "ledger")?.0.final_bound(), "out"))
}

/// Online-VI learning-error bound with the true parameter known. Pass NaN
/// for `diameter` unless `metric_id` is W1.
///
/// # Safety
/// `elbo_floors` and `evidences` must be valid for `n` reads and `out` for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn bsl_vi_bound(
    metric_id: u32,
    r: u32,
    det_gamma: f64,
    elbo_floors: *const f64,
    evidences: *const f64,
    n: usize,
    diameter: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let inp = VIBoundInputs {
            r,
            det_gamma,
            elbo_floors: slice(elbo_floors, n, "elbo_floors")?.to_vec(),
            evidences: slice(evidences, n, "evidences")?.to_vec(),
            diameter: (!diameter.is_nan()).then_some(diameter),
            beta_inputs: None,
        };
        write(out, vi_bound_type1(&inp, metric(metric_id)?)?, "out")
    })
}
