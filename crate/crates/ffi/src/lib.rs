//! C ABI over `decoyqkd`.
//!
//! Scenarios live behind an opaque [`DqScenario`] handle. Every fallible call
//! returns an `i32` status (`DQ_OK` or a negative code) and writes results
//! through out-pointers. The message of the most recent failure on the
//! calling thread is available from [`dq_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use decoyqkd::cli::Config;
use decoyqkd::scenario::{Scenario, Scheme};
use decoyqkd::Error;

pub const DQ_OK: i32 = 0;
pub const DQ_ERR_NULL: i32 = -1;
pub const DQ_ERR_UTF8: i32 = -2;
pub const DQ_ERR_CONFIG: i32 = -3;
pub const DQ_ERR_DOMAIN: i32 = -4;
pub const DQ_ERR_NUMERIC: i32 = -5;
pub const DQ_ERR_ESTIMATION: i32 = -6;
pub const DQ_ERR_NO_RATE: i32 = -7;
pub const DQ_ERR_BUFFER: i32 = -8;
pub const DQ_ERR_PANIC: i32 = -9;

/// Opaque scenario handle.
pub struct DqScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn code_of(err: &Error) -> i32 {
    match err {
        Error::Configuration(_) => DQ_ERR_CONFIG,
        Error::Domain { .. } => DQ_ERR_DOMAIN,
        Error::NonConvergence { .. } | Error::IllConditioned { .. } | Error::CutoffTooSmall { .. } => {
            DQ_ERR_NUMERIC
        }
        Error::NegativeProbability { .. }
        | Error::SignCondition(_)
        | Error::EstimationInvalid(_)
        | Error::EmptyFeasibleRegion => DQ_ERR_ESTIMATION,
        Error::NoPositiveRate => DQ_ERR_NO_RATE,
    }
}

/// Runs `f`, converting library errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (i32, String)>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DQ_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            DQ_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (code_of(&e), e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (DQ_ERR_NULL, format!("{what} is null"))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (DQ_ERR_UTF8, format!("{what} is not valid UTF-8")))
}

unsafe fn scenario<'a>(h: *const DqScenario) -> Result<&'a Scenario, (i32, String)> {
    h.as_ref().map(|s| &s.inner).ok_or_else(|| null("scenario"))
}

fn publish(s: Scenario, out: *mut *mut DqScenario) -> Result<(), (i32, String)> {
    s.validate().map_err(lib_err)?;
    unsafe { *out = Box::into_raw(Box::new(DqScenario { inner: s })) };
    Ok(())
}

/// Creates a scenario from `key = value` configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dq_scenario_from_config(text: *const c_char, out: *mut *mut DqScenario) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(text, "text")?;
        let cfg = Config::parse(text, None).map_err(lib_err)?;
        publish(cfg.scenario, out)
    })
}

/// Creates a scenario with default parameters for a scheme name such as
/// `"wcp-threshold"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dq_scenario_from_scheme(name: *const c_char, out: *mut *mut DqScenario) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let name = read_str(name, "name")?;
        let scheme: Scheme = name.parse().map_err(lib_err)?;
        publish(Scenario::new(scheme), out)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from a `dq_scenario_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dq_scenario_free(h: *mut DqScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of free parameters optimized for this scenario.
///
/// # Safety
/// `h` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dq_parameter_count(h: *const DqScenario, out: *mut usize) -> i32 {
    guard(|| {
        let s = scenario(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.axes().len();
        Ok(())
    })
}

/// Copies the name of parameter `i` into `buf` as a NUL-terminated string.
///
/// # Safety
/// `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dq_parameter_name(h: *const DqScenario, i: usize, buf: *mut c_char, len: usize) -> i32 {
    guard(|| {
        let s = scenario(h)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let axes = s.axes();
        let axis = axes
            .get(i)
            .ok_or_else(|| (DQ_ERR_DOMAIN, format!("parameter index {i} out of range")))?;
        let name = axis.name.as_bytes();
        if name.len() + 1 > len {
            return Err((DQ_ERR_BUFFER, format!("name needs {} bytes", name.len() + 1)));
        }
        ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Key rate at distance `d` km for explicit parameters `x[0..len]`, in the
/// order of the scenario's axes.
///
/// # Safety
/// `x` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dq_key_rate(
    h: *const DqScenario,
    x: *const f64,
    len: usize,
    d: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let s = scenario(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = s.axes().len();
        if len != n {
            return Err((DQ_ERR_CONFIG, format!("expected {n} parameters, got {len}")));
        }
        let x = if n == 0 {
            &[][..]
        } else if x.is_null() {
            return Err(null("x"));
        } else {
            std::slice::from_raw_parts(x, n)
        };
        *out = s.evaluate(x, d).map_err(lib_err)?.key_rate;
        Ok(())
    })
}

/// Optimized key rate at `d` km. When `x_out` is non-null the optimal
/// parameters are written to it; `x_len` must then equal the parameter count.
///
/// # Safety
/// `rate` must be writable; `x_out`, if non-null, must hold `x_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dq_optimize(
    h: *const DqScenario,
    d: f64,
    rate: *mut f64,
    x_out: *mut f64,
    x_len: usize,
) -> i32 {
    guard(|| {
        let s = scenario(h)?;
        if rate.is_null() {
            return Err(null("rate"));
        }
        let axes = s.axes();
        if !x_out.is_null() && x_len != axes.len() {
            return Err((DQ_ERR_BUFFER, format!("parameter buffer holds {x_len}, need {}", axes.len())));
        }
        let point = s.optimize(d, None).map_err(lib_err)?;
        *rate = point.key_rate;
        if !x_out.is_null() {
            let dst = std::slice::from_raw_parts_mut(x_out, x_len);
            for (slot, axis) in dst.iter_mut().zip(&axes) {
                *slot = point.parameter(&axis.name).unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Distance in km at which the optimized key rate vanishes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dq_cutoff(h: *const DqScenario, out: *mut f64) -> i32 {
    guard(|| {
        let s = scenario(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.cutoff_distance().map_err(lib_err)?.distance_km;
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length in bytes,
/// excluding the terminator, so callers can size a retry.
///
/// # Safety
/// `buf`, if non-null, must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dq_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
