//! C ABI for the critlink library.
//!
//! Every fallible function returns a [`CritlinkStatus`]. On failure a
//! description is available from [`critlink_last_error`] on the same
//! thread until the next failing call. Objects are opaque handles created
//! by the `*_build`, `*_generate`, `*_load` and `critlink_solve` functions and released with
//! the matching `*_free`. Passing NULL to a `*_free` function is a no-op.

use critlink::delay::NdiOracle;
use critlink::qubo::{build_qubo, PairMode, PenaltyConfig, QuboProblem};
use critlink::report::{load_dataset, CliError, Dataset, RunConfig, SyntheticSpec};
use critlink::solver::{solve, Method, SolveOptions, SolveResult};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CritlinkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    SolveFailed = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Solver selection for [`critlink_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CritlinkMethod {
    Brute = 0,
    Topk = 1,
    AnnealSwap = 2,
    AnnealPenalty = 3,
}

fn method_from_raw(raw: u32) -> Option<Method> {
    Some(match raw {
        x if x == CritlinkMethod::Brute as u32 => Method::Brute,
        x if x == CritlinkMethod::Topk as u32 => Method::Topk,
        x if x == CritlinkMethod::AnnealSwap as u32 => Method::AnnealSwap,
        x if x == CritlinkMethod::AnnealPenalty as u32 => Method::AnnealPenalty,
        _ => return None,
    })
}

/// A network with its snapshot series.
pub struct CritlinkDataset(Dataset);

/// A penalty-folded QUBO for one time step.
pub struct CritlinkProblem(QuboProblem);

/// A solved critical set.
pub struct CritlinkResult(SolveResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(CritlinkStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e.exit_code() {
            critlink::report::ExitCode::Io => CritlinkStatus::Io,
            _ => CritlinkStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(CritlinkStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CritlinkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CritlinkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CritlinkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(CritlinkStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(CritlinkStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn bits_from(bits: *const u8, len: usize, expected: usize) -> Result<Vec<bool>, Failure> {
    if len != expected {
        return Err(invalid(format!(
            "bit vector has {len} entries, expected {expected}"
        )));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    if bits.is_null() {
        return Err(Failure(CritlinkStatus::NullPointer, "bits is NULL".into()));
    }
    Ok(std::slice::from_raw_parts(bits, len)
        .iter()
        .map(|&b| b != 0)
        .collect())
}

/// Message describing the last failure on this thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn critlink_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn critlink_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic network.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_generate(
    nodes: usize,
    links: usize,
    steps: usize,
    seed: u64,
    out: *mut *mut CritlinkDataset,
) -> CritlinkStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = Dataset::synthetic(
            SyntheticSpec {
                nodes,
                links,
                steps,
            },
            seed,
        )?;
        *out = Box::into_raw(Box::new(CritlinkDataset(ds)));
        Ok(())
    })
}

/// Loads an observation CSV (default column names, comma-delimited,
/// forward-fill repair) or a directory written by `critlink ingest`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_load(
    path: *const c_char,
    out: *mut *mut CritlinkDataset,
) -> CritlinkStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = CStr::from_ptr(deref(path, "path")?)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let config = RunConfig {
            input: Some(PathBuf::from(path)),
            ..RunConfig::default()
        };
        let ds = load_dataset(&config)?;
        *out = Box::into_raw(Box::new(CritlinkDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_free(ds: *mut CritlinkDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of links, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_link_count(ds: *const CritlinkDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.topology.link_count())
}

/// Number of time steps, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_step_count(ds: *const CritlinkDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.series.step_count())
}

/// Writes the `index`-th time step value to `out`.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_time_step(
    ds: *const CritlinkDataset,
    index: usize,
    out: *mut u32,
) -> CritlinkStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        let steps = ds.0.series.time_steps();
        *out = *steps.get(index).ok_or_else(|| {
            invalid(format!(
                "index {index} out of range ({} steps)",
                steps.len()
            ))
        })?;
        Ok(())
    })
}

/// Network delay index at `time_step` for the disruption vector `bits`
/// (`len` bytes, nonzero meaning disrupted).
///
/// # Safety
/// `ds` must be a live handle, `bits` must point to `len` bytes, `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_dataset_ndi(
    ds: *const CritlinkDataset,
    gamma: f64,
    time_step: u32,
    bits: *const u8,
    len: usize,
    out: *mut f64,
) -> CritlinkStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        let u = bits_from(bits, len, ds.0.topology.link_count())?;
        let oracle = ds.0.oracle(gamma)?;
        *out = oracle
            .ndi(&u, time_step)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Builds the problem for `k` disrupted links at `time_step`.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_problem_build(
    ds: *const CritlinkDataset,
    time_step: u32,
    k: usize,
    gamma: f64,
    safety_factor: f64,
    out: *mut *mut CritlinkProblem,
) -> CritlinkStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        let oracle = ds.0.oracle(gamma)?;
        let p = build_qubo(
            &oracle,
            time_step,
            k,
            &PenaltyConfig { safety_factor },
            PairMode::Auto,
            Some(gamma),
        )
        .map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(CritlinkProblem(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_problem_free(p: *mut CritlinkProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of variables, or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_problem_len(p: *const CritlinkProblem) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// Penalty weight, or NaN for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_problem_lambda(p: *const CritlinkProblem) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.0.lambda())
}

/// Energy of `bits` (`len` bytes).
///
/// # Safety
/// `p` must be a live handle, `bits` must point to `len` bytes and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_problem_energy(
    p: *const CritlinkProblem,
    bits: *const u8,
    len: usize,
    out: *mut f64,
) -> CritlinkStatus {
    guard(|| {
        let p = deref(p, "problem")?;
        let out = out_ptr(out, "out")?;
        let u = bits_from(bits, len, p.0.len())?;
        *out = p.0.energy(&u).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Writes the problem in the plain-text QUBO format.
///
/// # Safety
/// `p` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn critlink_problem_write(
    p: *const CritlinkProblem,
    path: *const c_char,
) -> CritlinkStatus {
    guard(|| {
        let p = deref(p, "problem")?;
        let path = CStr::from_ptr(deref(path, "path")?)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let mut bytes = Vec::new();
        p.0.write_to(&mut bytes)
            .map_err(|e| invalid(e.to_string()))?;
        critlink::report::write_atomic(std::path::Path::new(path), &bytes)?;
        Ok(())
    })
}

/// Solves `p` with the default schedule for `method`, one of the
/// `CritlinkMethod` values. Any other value yields `INVALID_ARGUMENT`.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_solve(
    p: *const CritlinkProblem,
    method: u32,
    seed: u64,
    out: *mut *mut CritlinkResult,
) -> CritlinkStatus {
    guard(|| {
        let p = deref(p, "problem")?;
        let out = out_ptr(out, "out")?;
        let method = method_from_raw(method).ok_or_else(|| {
            Failure(
                CritlinkStatus::InvalidArgument,
                format!("unknown method {method}"),
            )
        })?;
        let r = solve(&p.0, &SolveOptions::with_method(method), seed)
            .map_err(|e| Failure(CritlinkStatus::SolveFailed, e.to_string()))?;
        *out = Box::into_raw(Box::new(CritlinkResult(r)));
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_result_free(r: *mut CritlinkResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Energy of the returned vector, or NaN for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_result_energy(r: *const CritlinkResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.energy)
}

/// NDI increase over the undisrupted network, or NaN for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_result_gain(r: *const CritlinkResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.ndi_gain)
}

/// Whether exactly `k` links are selected; false for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn critlink_result_feasible(r: *const CritlinkResult) -> bool {
    r.as_ref().is_some_and(|r| r.0.feasible)
}

/// Copies the selected link indices (increasing) into `buf`. `count`
/// receives the number of selected links even when `cap` is too small, in
/// which case nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `r` must be a live handle, `buf` must have room for `cap` entries (may
/// be NULL when `cap` is 0) and `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn critlink_result_selected(
    r: *const CritlinkResult,
    buf: *mut usize,
    cap: usize,
    count: *mut usize,
) -> CritlinkStatus {
    guard(|| {
        let r = deref(r, "result")?;
        let count = out_ptr(count, "count")?;
        let sel = r.0.selected();
        *count = sel.len();
        if cap < sel.len() {
            return Err(Failure(
                CritlinkStatus::BufferTooSmall,
                format!("need room for {} indices, got {cap}", sel.len()),
            ));
        }
        if !sel.is_empty() {
            if buf.is_null() {
                return Err(Failure(CritlinkStatus::NullPointer, "buf is NULL".into()));
            }
            std::slice::from_raw_parts_mut(buf, sel.len()).copy_from_slice(&sel);
        }
        Ok(())
    })
}
