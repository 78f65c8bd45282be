//! C ABI over `fiap-core`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`/`*_from_*`
//! function and released with the matching `*_free`. Every fallible call
//! returns a [`FiapStatus`]; on failure the message is available from
//! [`fiap_last_error`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `FIAP_STATUS_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fiap_core::dfiap::{self, DeltaChainSpec};
use fiap_core::experiment::{self, ExperimentConfig, Mode};
use fiap_core::expr::Expr;
use fiap_core::model::{validate, CfiapSpec, ModelConfig, Severity};
use fiap_core::ph::{self, RateFunction};
use fiap_core::rmf::{self, EventLog, ReplicaState};
use fiap_core::FiapError;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiapStatus {
    Ok = 0,
    /// A required pointer argument was null.
    ErrNull = 1,
    /// A string argument was not valid UTF-8.
    ErrUtf8 = 2,
    /// Configuration could not be parsed or is inconsistent.
    ErrConfig = 3,
    /// A parameter is out of its domain.
    ErrInvalid = 4,
    /// Exact enumeration would exceed its budget.
    ErrBudget = 5,
    /// The simulation produced a non-finite value or a bound violation.
    ErrNumeric = 6,
    /// Reading or writing files failed.
    ErrIo = 7,
    /// The output buffer is too small; the required length was written.
    ErrBufferTooSmall = 8,
    /// An index is out of range.
    ErrRange = 9,
    /// Internal panic caught at the boundary.
    ErrPanic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &FiapError) -> FiapStatus {
    match e {
        FiapError::Config(_) | FiapError::Json(_) | FiapError::UnknownModel(_) | FiapError::Expr(_) => FiapStatus::ErrConfig,
        FiapError::EnumerationBudget { .. } => FiapStatus::ErrBudget,
        FiapError::BoundViolation { .. } | FiapError::NonPositiveBound { .. } | FiapError::NonFinite { .. } => FiapStatus::ErrNumeric,
        FiapError::Io(_) | FiapError::Csv(_) => FiapStatus::ErrIo,
        _ => FiapStatus::ErrInvalid,
    }
}

struct Failure(FiapStatus, String);

impl From<FiapError> for Failure {
    fn from(e: FiapError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn fail<T>(status: FiapStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> Res<()>) -> FiapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FiapStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FiapStatus::ErrPanic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().map_or_else(|| fail(FiapStatus::ErrNull, format!("{what} is null")), Ok)
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().map_or_else(|| fail(FiapStatus::ErrNull, format!("{what} is null")), Ok)
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(FiapStatus::ErrNull, format!("{what} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(FiapStatus::ErrUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Res<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FiapStatus::ErrNull, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(value: T, dst: &mut *mut T) {
    *dst = Box::into_raw(Box::new(value));
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fiap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fiap_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fiap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A continuous-time model.
pub struct FiapModel(CfiapSpec);

/// Final state and event log of one replica run.
pub struct FiapRmfRun {
    state: ReplicaState,
    log: EventLog,
}

/// Piecewise-constant mean rates from the fixed-point solver.
pub struct FiapRates {
    rates: RateFunction,
    converged: bool,
}

/// A δ-step chain.
pub struct FiapChain(DeltaChainSpec);

/// Parses a JSON model config.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_model_from_json(json: *const c_char, out_model: *mut *mut FiapModel) -> FiapStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        *dst = ptr::null_mut();
        let cfg = ModelConfig::from_json(string(json, "json")?)?;
        boxed(FiapModel(cfg.build()?), dst);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`fiap_model_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fiap_model_free(model: *mut FiapModel) {
    free(model)
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fiap_model_nodes(model: *const FiapModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.nodes())
}

/// Runs the standing-assumption checks. `worst` receives 0 (pass), 1 (note),
/// 2 (warn) or 3 (fail).
///
/// # Safety
/// `model` must be a live handle and `worst` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_model_validate(model: *const FiapModel, worst: *mut u32) -> FiapStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let w = out(worst, "worst")?;
        *w = match validate(&m.0).worst() {
            Severity::Pass => 0,
            Severity::Note => 1,
            Severity::Warn => 2,
            Severity::Fail => 3,
        };
        Ok(())
    })
}

/// Simulates `replicas` interacting replicas on `[0, horizon]`.
///
/// # Safety
/// `model` must be a live handle and `out_run` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_rmf_simulate(
    model: *const FiapModel,
    replicas: usize,
    horizon: f64,
    seed: u64,
    out_run: *mut *mut FiapRmfRun,
) -> FiapStatus {
    guard(|| {
        let dst = out(out_run, "out_run")?;
        *dst = ptr::null_mut();
        let m = borrow(model, "model")?;
        let (state, log) = rmf::simulate_rmf(&m.0, replicas, horizon, seed)?;
        boxed(FiapRmfRun { state, log }, dst);
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`fiap_rmf_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fiap_rmf_free(run: *mut FiapRmfRun) {
    free(run)
}

/// Total departures and arrivals in the log.
///
/// # Safety
/// `run` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fiap_rmf_event_counts(run: *const FiapRmfRun, departures: *mut usize, arrivals: *mut usize) -> FiapStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        *out(departures, "departures")? = r.log.departures.len();
        *out(arrivals, "arrivals")? = r.log.arrivals.len();
        Ok(())
    })
}

fn check_index(state: &ReplicaState, m: usize, i: usize) -> Res<()> {
    if m >= state.replicas() || i >= state.nodes() {
        return fail(FiapStatus::ErrRange, format!("({m}, {i}) is outside {}x{}", state.replicas(), state.nodes()));
    }
    Ok(())
}

/// Departures of node `i` in replica `m` up to time `t`.
///
/// # Safety
/// `run` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_rmf_departures(run: *const FiapRmfRun, m: usize, i: usize, t: f64, count: *mut usize) -> FiapStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        check_index(&r.state, m, i)?;
        *out(count, "count")? = r.log.departure_count(m, i, t);
        Ok(())
    })
}

/// Intensity of node `i` in replica `m` at the horizon.
///
/// # Safety
/// `run` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_rmf_final_intensity(run: *const FiapRmfRun, m: usize, i: usize, value: *mut f64) -> FiapStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        check_index(&r.state, m, i)?;
        *out(value, "value")? = r.state.lam(m, i);
        Ok(())
    })
}

/// Writes the event log as CSV.
///
/// # Safety
/// `run` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fiap_rmf_write_csv(run: *const FiapRmfRun, path: *const c_char) -> FiapStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        r.log.save_csv(&PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// Solves the Poisson-Hypothesis fixed point on `cells` time cells.
/// `converged` (optional) receives 1 when the stopping rule fired.
///
/// # Safety
/// `model` must be a live handle, `out_rates` a valid pointer and
/// `converged` valid or null.
#[no_mangle]
pub unsafe extern "C" fn fiap_ph_solve(
    model: *const FiapModel,
    cells: usize,
    tol: f64,
    max_iter: usize,
    n_paths: usize,
    seed: u64,
    out_rates: *mut *mut FiapRates,
    converged: *mut i32,
) -> FiapStatus {
    guard(|| {
        let dst = out(out_rates, "out_rates")?;
        *dst = ptr::null_mut();
        let m = borrow(model, "model")?;
        let fp = ph::solve_fixed_point(&m.0, cells, tol, max_iter, n_paths, seed)?;
        if let Some(c) = converged.as_mut() {
            *c = fp.converged as i32;
        }
        boxed(FiapRates { rates: fp.rates, converged: fp.converged }, dst);
        Ok(())
    })
}

/// # Safety
/// `rates` must come from [`fiap_ph_solve`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fiap_rates_free(rates: *mut FiapRates) {
    free(rates)
}

/// 1 if the solve converged, 0 if not or for a null handle.
///
/// # Safety
/// `rates` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fiap_rates_converged(rates: *const FiapRates) -> i32 {
    rates.as_ref().is_some_and(|r| r.converged) as i32
}

/// Mean rate of `node` at time `t`.
///
/// # Safety
/// `rates` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_rates_at(rates: *const FiapRates, node: usize, t: f64, value: *mut f64) -> FiapStatus {
    guard(|| {
        let r = borrow(rates, "rates")?;
        if node >= r.rates.nodes() {
            return fail(FiapStatus::ErrRange, format!("node {node} of {}", r.rates.nodes()));
        }
        *out(value, "value")? = r.rates.at(node, t);
        Ok(())
    })
}

/// Exact law of the Poisson-Hypothesis arrival count of `node` at `t`.
/// Masses for `offset, offset + 1, …` go to `probs`; `len` receives the
/// support length. With `capacity` too small nothing but `len` is written and
/// `FIAP_STATUS_ERR_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// Handles must be live; `probs` must hold `capacity` doubles (or be null
/// when `capacity` is 0); `offset` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fiap_ph_arrival_pmf(
    model: *const FiapModel,
    rates: *const FiapRates,
    node: usize,
    t: f64,
    offset: *mut i64,
    probs: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> FiapStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let r = borrow(rates, "rates")?;
        if node >= m.0.nodes() {
            return fail(FiapStatus::ErrRange, format!("node {node} of {}", m.0.nodes()));
        }
        let pmf = ph::arrival_pmf(&m.0, &r.rates, node, t)?;
        let masses: Vec<f64> = pmf.iter().map(|(_, p)| p).collect();
        *out(len, "len")? = masses.len();
        if capacity < masses.len() {
            return fail(FiapStatus::ErrBufferTooSmall, format!("need {} doubles, got {capacity}", masses.len()));
        }
        if probs.is_null() {
            return fail(FiapStatus::ErrNull, "probs is null");
        }
        *out(offset, "offset")? = pmf.min();
        std::slice::from_raw_parts_mut(probs, masses.len()).copy_from_slice(&masses);
        Ok(())
    })
}

/// Builds a δ-chain with `k` nodes. `mu` is `k*k`, row-major with sources
/// as rows; `sigma` is the spike rate as an expression in `x`.
///
/// # Safety
/// `r` must hold `k` values, `mu` `k*k` values; `sigma` must be a
/// NUL-terminated string and `out_chain` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fiap_chain_new(
    k: usize,
    r: *const u64,
    mu: *const u64,
    sigma: *const c_char,
    delta: f64,
    out_chain: *mut *mut FiapChain,
) -> FiapStatus {
    guard(|| {
        let dst = out(out_chain, "out_chain")?;
        *dst = ptr::null_mut();
        let r = slice(r, k, "r")?.to_vec();
        let mu = slice(mu, k * k, "mu")?.chunks(k.max(1)).map(<[u64]>::to_vec).collect();
        let sigma = Expr::parse(string(sigma, "sigma")?)?;
        boxed(FiapChain(DeltaChainSpec::new(r, mu, sigma, delta)?), dst);
        Ok(())
    })
}

/// # Safety
/// `chain` must come from [`fiap_chain_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fiap_chain_free(chain: *mut FiapChain) {
    free(chain)
}

/// Exact probability that coordinate `(m, i)` moves to `l` in one step from
/// `state` (`replicas × k`, row-major by replica).
///
/// # Safety
/// `chain` must be a live handle, `state` must hold `replicas * k` values and
/// `prob` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fiap_chain_transition_prob(
    chain: *const FiapChain,
    state: *const u64,
    replicas: usize,
    m: usize,
    i: usize,
    l: u64,
    prob: *mut f64,
) -> FiapStatus {
    guard(|| {
        let c = borrow(chain, "chain")?;
        let k = c.0.nodes();
        let flat = slice(state, replicas * k, "state")?;
        let rows: Vec<Vec<u64>> = flat.chunks(k).map(<[u64]>::to_vec).collect();
        if m >= replicas || i >= k {
            return fail(FiapStatus::ErrRange, format!("({m}, {i}) is outside {replicas}x{k}"));
        }
        *out(prob, "prob")? = dfiap::transition_prob_exact(&rows, &c.0, m, i, l)?;
        Ok(())
    })
}

/// Runs an experiment from a config file. `mode` is one of `rmf-sim`,
/// `ph-solve`, `compare`, `dfiap-validate`, `sweep-M`; `out_dir` may be null
/// to keep the configured directory.
///
/// # Safety
/// `config_path` and `mode` must be NUL-terminated strings; `out_dir` must be
/// one or null.
#[no_mangle]
pub unsafe extern "C" fn fiap_run_experiment(config_path: *const c_char, mode: *const c_char, out_dir: *const c_char) -> FiapStatus {
    guard(|| {
        let mode: Mode = string(mode, "mode")?.parse()?;
        let mut cfg = ExperimentConfig::load(&PathBuf::from(string(config_path, "config_path")?))?;
        if !out_dir.is_null() {
            cfg.out = Some(PathBuf::from(string(out_dir, "out_dir")?));
        }
        experiment::run(&cfg, mode)?;
        Ok(())
    })
}
