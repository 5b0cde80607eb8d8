//! C ABI over `tide-core`.
//!
//! Run logs are opaque `TideRunLog` handles owned by the caller and released
//! with `tide_run_log_free`. Every function returns a `TideStatus`; on
//! failure `tide_last_error_message` describes the error for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tide_core::auv::{bootstrap_ci, compute_auv, per_trajectory_auv};
use tide_core::loops::loop_ratio;
use tide_core::memory::{memory_index, Alignment, PairedRuns};
use tide_core::model::{parse_run_log, RunLog, StateIdentityConfig};
use tide_core::TideError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TideStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Computation = 6,
    Panic = 7,
}

/// Parsed run log.
pub struct TideRunLog {
    run: RunLog,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: TideStatus, message: &str) -> TideStatus {
    set_last_error(message);
    status
}

fn status_of(e: &TideError) -> TideStatus {
    match e.root() {
        TideError::Io(_) => TideStatus::Io,
        TideError::Parse(_) | TideError::Json(_) => TideStatus::Parse,
        TideError::InvalidArgument(_) => TideStatus::InvalidArgument,
        _ => TideStatus::Computation,
    }
}

fn guard<F>(f: F) -> TideStatus
where
    F: FnOnce() -> Result<(), (TideStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TideStatus::Ok
        }
        Ok(Err((status, message))) => fail(status, &message),
        Err(_) => fail(TideStatus::Panic, "internal panic"),
    }
}

fn tide(e: TideError) -> (TideStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (TideStatus, String) {
    (TideStatus::NullPointer, format!("{name} is null"))
}

unsafe fn handle<'a>(log: *const TideRunLog, name: &str) -> Result<&'a RunLog, (TideStatus, String)> {
    log.as_ref().map(|h| &h.run).ok_or_else(|| null(name))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), (TideStatus, String)> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn horizon(run: &RunLog, t_max: usize) -> usize {
    if t_max == 0 {
        run.metadata.t_max
    } else {
        t_max
    }
}

fn boxed(run: RunLog) -> *mut TideRunLog {
    Box::into_raw(Box::new(TideRunLog { run }))
}

/// Opens and validates a log file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_run_log_open(path: *const c_char, out: *mut *mut TideRunLog) -> TideStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (TideStatus::InvalidUtf8, "path is not UTF-8".to_string()))?;
        let file = File::open(path).map_err(|e| (TideStatus::Io, format!("{path}: {e}")))?;
        let run = parse_run_log(BufReader::new(file)).map_err(tide)?;
        out.write(boxed(run));
        Ok(())
    })
}

/// Parses and validates a log held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_run_log_parse(data: *const u8, len: usize, out: *mut *mut TideRunLog) -> TideStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let run = parse_run_log(bytes).map_err(tide)?;
        out.write(boxed(run));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `log` must come from `tide_run_log_open` or `tide_run_log_parse` and not
/// have been freed already.
#[no_mangle]
pub unsafe extern "C" fn tide_run_log_free(log: *mut TideRunLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// # Safety
/// `log` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_run_log_trajectory_count(log: *const TideRunLog, out: *mut usize) -> TideStatus {
    guard(|| {
        let run = handle(log, "log")?;
        write_out(out, run.trajectories.len(), "out")
    })
}

/// Horizon declared in the log header.
///
/// # Safety
/// `log` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_run_log_t_max(log: *const TideRunLog, out: *mut usize) -> TideStatus {
    guard(|| {
        let run = handle(log, "log")?;
        write_out(out, run.metadata.t_max, "out")
    })
}

/// AUV and final success rate in `[0, 1]`. `t_max == 0` uses the header value.
///
/// # Safety
/// `log` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_auv(
    log: *const TideRunLog,
    t_max: usize,
    out_auv: *mut f64,
    out_sr: *mut f64,
) -> TideStatus {
    guard(|| {
        let run = handle(log, "log")?;
        if out_auv.is_null() || out_sr.is_null() {
            return Err(null("output pointer"));
        }
        let result = compute_auv(run, horizon(run, t_max), None).map_err(tide)?;
        out_auv.write(result.auv);
        out_sr.write(result.sr_final);
        Ok(())
    })
}

/// Percentile bootstrap interval over per-trajectory AUV scores.
///
/// # Safety
/// `log` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_auv_bootstrap(
    log: *const TideRunLog,
    t_max: usize,
    confidence: f64,
    resamples: usize,
    seed: u64,
    out_low: *mut f64,
    out_high: *mut f64,
) -> TideStatus {
    guard(|| {
        let run = handle(log, "log")?;
        if out_low.is_null() || out_high.is_null() {
            return Err(null("output pointer"));
        }
        let scores = per_trajectory_auv(run, horizon(run, t_max)).map_err(tide)?;
        let (lo, hi) = bootstrap_ci(&scores, confidence, resamples, seed).map_err(tide)?;
        out_low.write(lo);
        out_high.write(hi);
        Ok(())
    })
}

/// Pooled loop ratio. `cosine_threshold <= 0` selects exact state identity.
///
/// # Safety
/// `log` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_loop_ratio(log: *const TideRunLog, cosine_threshold: f64, out: *mut f64) -> TideStatus {
    guard(|| {
        let run = handle(log, "log")?;
        let cfg = if cosine_threshold > 0.0 {
            StateIdentityConfig::cosine(cosine_threshold).map_err(tide)?
        } else {
            StateIdentityConfig::Exact
        };
        let report = loop_ratio(run, &cfg).map_err(tide)?;
        write_out(out, report.loop_ratio, "out")
    })
}

/// `AUV(with) - AUV(without)`. Nonzero `intersect` restricts both runs to
/// their shared task ids; otherwise task sets must match exactly.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tide_memory_index(
    with_memory: *const TideRunLog,
    without_memory: *const TideRunLog,
    intersect: i32,
    t_max: usize,
    out: *mut f64,
) -> TideStatus {
    guard(|| {
        let with_memory = handle(with_memory, "with_memory")?;
        let without_memory = handle(without_memory, "without_memory")?;
        let pair = PairedRuns {
            with_memory,
            without_memory,
            alignment: if intersect != 0 {
                Alignment::Intersect
            } else {
                Alignment::Strict
            },
        };
        let result = memory_index(&pair, horizon(with_memory, t_max)).map_err(tide)?;
        write_out(out, result.mi, "out")
    })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn tide_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tide_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
