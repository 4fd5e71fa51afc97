//! C ABI for the joinqubo solver.
//!
//! Workloads and solutions are opaque heap handles released with their
//! `_free` function. Every fallible call returns a [`JqStatus`]; on failure
//! `jq_last_error_message` describes the error for the calling thread.
//! Strings returned through caller buffers are NUL-terminated UTF-8; when the
//! buffer is too small the call reports `JQ_BUFFER_TOO_SMALL` and writes the
//! required size (including the NUL) to `needed`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use joinqubo::cli::hint::emit_hint;
use joinqubo::cli::write_trace_csv;
use joinqubo::joingraph::dp_optimal_plan;
use joinqubo::orchestrator::Mode;
use joinqubo::{load_workload, solve, Catalog, Error, QuerySpec, Solution, SolveConfig, Strategy};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JqStatus {
    JqOk = 0,
    JqNullArgument = 1,
    JqInvalidUtf8 = 2,
    /// Malformed or inconsistent workload document.
    JqInvalidWorkload = 3,
    JqUnknownQuery = 4,
    JqInvalidArgument = 5,
    /// The solver or oracle failed; see the error message.
    JqSolveFailed = 6,
    JqBufferTooSmall = 7,
    /// A Rust panic was caught at the boundary.
    JqInternal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JqMode {
    JqModeAuto = 0,
    JqModeDirect = 1,
    JqModeRelax = 2,
    JqModeDecompose = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JqStrategy {
    JqStrategyDirect = 0,
    JqStrategyRelax = 1,
    JqStrategyDecompose = 2,
}

/// Solver options; obtain defaults from `jq_solve_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct JqSolveOptions {
    pub budget_ms: f64,
    pub seed: u64,
    /// A `JqMode` value.
    pub mode: i32,
    /// Largest QUBO (in variables) sampled without decomposition.
    pub capacity: u32,
    pub num_reads: u32,
    pub sweeps: u32,
}

/// Parsed catalog plus its queries.
pub struct JqWorkload {
    catalog: Catalog,
    queries: Vec<QuerySpec>,
}

pub struct JqSolution {
    inner: Solution,
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

fn fail(status: JqStatus, msg: impl Into<String>) -> JqStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting a panic into `JqInternal`.
fn guard(f: impl FnOnce() -> JqStatus) -> JqStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(JqStatus::JqInternal, format!("internal error: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, JqStatus> {
    if p.is_null() {
        return Err(fail(JqStatus::JqNullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(JqStatus::JqInvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> JqStatus {
    let len = s.len() + 1;
    if !needed.is_null() {
        *needed = len;
    }
    if buf.is_null() || cap < len {
        return fail(JqStatus::JqBufferTooSmall, format!("buffer of {cap} bytes, {len} needed"));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    JqStatus::JqOk
}

fn status_of(e: &Error) -> JqStatus {
    match e {
        Error::Parse(_) | Error::Validation(_) | Error::Disconnected(_) => JqStatus::JqInvalidWorkload,
        Error::UnknownQuery(_) => JqStatus::JqUnknownQuery,
        Error::InvalidParam(_) => JqStatus::JqInvalidArgument,
        _ => JqStatus::JqSolveFailed,
    }
}

fn find_query<'a>(w: &'a JqWorkload, id: &str) -> Result<&'a QuerySpec, JqStatus> {
    w.queries
        .iter()
        .find(|q| q.id == id)
        .ok_or_else(|| fail(JqStatus::JqUnknownQuery, format!("unknown query `{id}`")))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn jq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON workload document into a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_workload_parse(json: *const c_char, out: *mut *mut JqWorkload) -> JqStatus {
    guard(|| {
        if out.is_null() {
            return fail(JqStatus::JqNullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let text = match read_str(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_workload(text) {
            Ok((catalog, queries)) => {
                *out = Box::into_raw(Box::new(JqWorkload { catalog, queries }));
                JqStatus::JqOk
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `workload` must come from `jq_workload_parse` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn jq_workload_free(workload: *mut JqWorkload) {
    if !workload.is_null() {
        drop(Box::from_raw(workload));
    }
}

/// Number of queries in the workload.
///
/// # Safety
/// `workload` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_workload_query_count(workload: *const JqWorkload, out: *mut usize) -> JqStatus {
    guard(|| match (workload.as_ref(), out.is_null()) {
        (Some(w), false) => {
            *out = w.queries.len();
            JqStatus::JqOk
        }
        _ => fail(JqStatus::JqNullArgument, "workload or out is null"),
    })
}

#[no_mangle]
pub extern "C" fn jq_solve_options_default() -> JqSolveOptions {
    let d = SolveConfig::default();
    JqSolveOptions {
        budget_ms: 5000.0,
        seed: d.seed,
        mode: JqMode::JqModeAuto as i32,
        capacity: d.capacity as u32,
        num_reads: d.sampler.num_reads as u32,
        sweeps: d.sampler.sweeps as u32,
    }
}

fn mode_from(raw: i32) -> Option<Mode> {
    Some(match raw {
        x if x == JqMode::JqModeAuto as i32 => Mode::Auto,
        x if x == JqMode::JqModeDirect as i32 => Mode::Force(Strategy::Direct),
        x if x == JqMode::JqModeRelax as i32 => Mode::Force(Strategy::Relax),
        x if x == JqMode::JqModeDecompose as i32 => Mode::Force(Strategy::Decompose),
        _ => return None,
    })
}

fn config_from(o: &JqSolveOptions, mode: Mode) -> SolveConfig {
    let d = SolveConfig::default();
    SolveConfig {
        mode,
        capacity: o.capacity as usize,
        seed: o.seed,
        sampler: joinqubo::sampler::SamplerParams { num_reads: o.num_reads as usize, sweeps: o.sweeps as usize, ..d.sampler },
        ..d
    }
}

/// Solves one query. `options` may be null for defaults.
///
/// # Safety
/// `workload` must be a live handle, `query_id` NUL-terminated, `options`
/// null or valid, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_solve(
    workload: *const JqWorkload,
    query_id: *const c_char,
    options: *const JqSolveOptions,
    out: *mut *mut JqSolution,
) -> JqStatus {
    guard(|| {
        if out.is_null() {
            return fail(JqStatus::JqNullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let Some(w) = workload.as_ref() else {
            return fail(JqStatus::JqNullArgument, "workload is null");
        };
        let id = match read_str(query_id, "query_id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let query = match find_query(w, id) {
            Ok(q) => q,
            Err(s) => return s,
        };
        let opts = options.as_ref().copied().unwrap_or_else(|| jq_solve_options_default());
        let Some(mode) = mode_from(opts.mode) else {
            return fail(JqStatus::JqInvalidArgument, format!("unknown mode {}", opts.mode));
        };
        if opts.num_reads == 0 || opts.sweeps == 0 {
            return fail(JqStatus::JqInvalidArgument, "num_reads and sweeps must be positive");
        }
        match solve(query, &w.catalog, opts.budget_ms, &config_from(&opts, mode)) {
            Ok(sol) => {
                *out = Box::into_raw(Box::new(JqSolution { inner: sol }));
                JqStatus::JqOk
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `solution` must come from `jq_solve` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_free(solution: *mut JqSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

unsafe fn with_solution(solution: *const JqSolution, f: impl FnOnce(&Solution) -> JqStatus) -> JqStatus {
    guard(|| match solution.as_ref() {
        Some(s) => f(&s.inner),
        None => fail(JqStatus::JqNullArgument, "solution is null"),
    })
}

unsafe fn put<T>(out: *mut T, v: T) -> JqStatus {
    if out.is_null() {
        return fail(JqStatus::JqNullArgument, "out is null");
    }
    *out = v;
    JqStatus::JqOk
}

/// Estimated plan cost (sum of intermediate result cardinalities).
///
/// # Safety
/// `solution` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_cost(solution: *const JqSolution, out: *mut f64) -> JqStatus {
    with_solution(solution, |s| put(out, s.cost))
}

/// # Safety
/// `solution` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_strategy(solution: *const JqSolution, out: *mut JqStrategy) -> JqStatus {
    with_solution(solution, |s| {
        let v = match s.strategy {
            Strategy::Direct => JqStrategy::JqStrategyDirect,
            Strategy::Relax => JqStrategy::JqStrategyRelax,
            Strategy::Decompose => JqStrategy::JqStrategyDecompose,
        };
        put(out, v)
    })
}

/// True when the budget ran out before the first sample and the plan is the greedy fallback.
///
/// # Safety
/// `solution` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_degraded(solution: *const JqSolution, out: *mut bool) -> JqStatus {
    with_solution(solution, |s| put(out, s.degraded))
}

/// Sum of solver, communication and refinement time over all iterations, in ms.
///
/// # Safety
/// `solution` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_time_quantum_ms(solution: *const JqSolution, out: *mut f64) -> JqStatus {
    with_solution(solution, |s| put(out, s.time_quantum_ms()))
}

/// Number of sampling iterations.
///
/// # Safety
/// `solution` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_iterations(solution: *const JqSolution, out: *mut usize) -> JqStatus {
    with_solution(solution, |s| put(out, s.trace.len()))
}

/// `Leading(...)` hint text.
///
/// # Safety
/// `solution` must be a live handle; `buf` must hold `cap` bytes (may be
/// null when `cap` is 0); `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_hint(solution: *const JqSolution, buf: *mut c_char, cap: usize, needed: *mut usize) -> JqStatus {
    with_solution(solution, |s| write_str(&s.hint, buf, cap, needed))
}

/// Plan in canonical `((a b) c)` form.
///
/// # Safety
/// Same as `jq_solution_hint`.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_plan(solution: *const JqSolution, buf: *mut c_char, cap: usize, needed: *mut usize) -> JqStatus {
    with_solution(solution, |s| write_str(&s.plan.to_string(), buf, cap, needed))
}

/// Per-iteration timing trace as CSV with a header row.
///
/// # Safety
/// Same as `jq_solution_hint`.
#[no_mangle]
pub unsafe extern "C" fn jq_solution_trace_csv(
    solution: *const JqSolution,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> JqStatus {
    with_solution(solution, |s| {
        let mut bytes = Vec::new();
        if let Err(e) = write_trace_csv(&mut bytes, &s.trace) {
            return fail(JqStatus::JqInternal, format!("{e:#}"));
        }
        match String::from_utf8(bytes) {
            Ok(text) => write_str(&text, buf, cap, needed),
            Err(e) => fail(JqStatus::JqInternal, e.to_string()),
        }
    })
}

/// Exact dynamic-programming optimum: cost into `cost`, hint into `buf`.
///
/// # Safety
/// `workload` must be a live handle, `query_id` NUL-terminated, `cost` a
/// valid pointer; buffer rules as in `jq_solution_hint`.
#[no_mangle]
pub unsafe extern "C" fn jq_oracle(
    workload: *const JqWorkload,
    query_id: *const c_char,
    cost: *mut f64,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> JqStatus {
    guard(|| {
        let Some(w) = workload.as_ref() else {
            return fail(JqStatus::JqNullArgument, "workload is null");
        };
        if cost.is_null() {
            return fail(JqStatus::JqNullArgument, "cost is null");
        }
        let id = match read_str(query_id, "query_id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let query = match find_query(w, id) {
            Ok(q) => q,
            Err(s) => return s,
        };
        match dp_optimal_plan(&w.catalog, query) {
            Ok((plan, c)) => {
                *cost = c;
                write_str(&emit_hint(&plan), buf, cap, needed)
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
