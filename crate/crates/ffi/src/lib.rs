//! C interface to `privmap`.
//!
//! Objects are opaque handles created by `*_new`/`*_from_json` functions and
//! released with the matching `*_free`. Fallible functions return a
//! [`PrivmapStatus`]; on failure a message is available from
//! [`privmap_last_error`] until the next failing call on the same thread.
//! Matrices cross the boundary as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use privmap::objective::{cost_posterior_limited, dc_split, dirichlet_lower_bound, evaluate_leakage, lb_dc_split};
use privmap::solver::multistart;
use privmap::{io, AdversaryPrior, Channel, DirichletPrior, Error, Matrix, PrivacyModel, SolveConfig, SolveResult};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivmapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    InvalidDistribution = 5,
    DimensionMismatch = 6,
    SupportViolation = 7,
    UndefinedPosterior = 8,
    IllDefinedLeakage = 9,
    SolverFailure = 10,
    Panic = 99,
}

/// Outcome of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivmapSolveStatus {
    /// Successive iterates moved less than `epsilon`.
    Converged = 0,
    /// Stopped at `max_iter`.
    MaxIter = 1,
}

/// Solver settings. Obtain defaults from [`privmap_solve_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrivmapSolveConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub seed: u64,
    /// Distortion budget; NaN means the model's own.
    pub delta: f64,
}

pub struct PrivmapModel(PrivacyModel);
pub struct PrivmapPrior(AdversaryPrior);
pub struct PrivmapDirichlet(DirichletPrior);
pub struct PrivmapResult(SolveResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PrivmapStatus {
    match e {
        Error::DimensionMismatch(_) => PrivmapStatus::DimensionMismatch,
        Error::InvalidDistribution(_) => PrivmapStatus::InvalidDistribution,
        Error::UndefinedPosterior { .. } => PrivmapStatus::UndefinedPosterior,
        Error::IllDefinedLeakage { .. } => PrivmapStatus::IllDefinedLeakage,
        Error::AssumptionViolation(_) | Error::PreconditionViolation(_) => PrivmapStatus::SupportViolation,
        Error::DivergentGradient { .. } | Error::InfeasibleInit(_) | Error::InnerSolverFailure(_) => {
            PrivmapStatus::SolverFailure
        }
        Error::InvalidConfig(_) => PrivmapStatus::InvalidArgument,
        Error::Parse(_) | Error::MissingColumn(_) | Error::EmptyDataset => PrivmapStatus::Parse,
        Error::Io(_) => PrivmapStatus::Io,
    }
}

/// Runs `f`, turning errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), (PrivmapStatus, String)>) -> PrivmapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrivmapStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PrivmapStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (PrivmapStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PrivmapStatus, String) {
    (PrivmapStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PrivmapStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PrivmapStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PrivmapStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn channel_arg(model: &PrivacyModel, data: *const f64, len: usize) -> Result<Channel, (PrivmapStatus, String)> {
    if data.is_null() {
        return Err(null("channel"));
    }
    let (ny, nz) = (model.ny(), model.nz());
    if len != ny * nz {
        return Err((
            PrivmapStatus::DimensionMismatch,
            format!("channel has {len} entries, model needs {ny}x{nz}"),
        ));
    }
    let m = Matrix::from_vec(ny, nz, std::slice::from_raw_parts(data, len).to_vec());
    Channel::with_mask(m, model.mask().to_vec()).map_err(lib_err)
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), (PrivmapStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn privmap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn privmap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model from JSON text.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privmap_model_from_json(json: *const c_char, out: *mut *mut PrivmapModel) -> PrivmapStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let model = io::parse_model(text, "<json>").map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(PrivmapModel(model))))
    })
}

/// Reads a model JSON file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn privmap_model_load(path: *const c_char, out: *mut *mut PrivmapModel) -> PrivmapStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = io::load_model(std::path::Path::new(path)).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(PrivmapModel(model))))
    })
}

/// Writes `|X|`, `|Y|`, `|Z|`.
///
/// # Safety
/// `model` must come from this library; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn privmap_model_dims(
    model: *const PrivmapModel,
    nx: *mut usize,
    ny: *mut usize,
    nz: *mut usize,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        write_out(nx, m.nx())?;
        write_out(ny, m.ny())?;
        write_out(nz, m.nz())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn privmap_model_free(model: *mut PrivmapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Adversary prior `{"p_hat_xy": [[...]]}` checked against `model`.
///
/// # Safety
/// Pointers must be valid; `json` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn privmap_prior_from_json(
    model: *const PrivmapModel,
    json: *const c_char,
    out: *mut *mut PrivmapPrior,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let text = str_arg(json, "json")?;
        let prior = io::parse_prior(text, "<json>", m).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(PrivmapPrior(prior))))
    })
}

/// The adversary that knows `p(x,y)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn privmap_prior_omniscient(
    model: *const PrivmapModel,
    out: *mut *mut PrivmapPrior,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        write_out(out, Box::into_raw(Box::new(PrivmapPrior(AdversaryPrior::omniscient(m)))))
    })
}

/// # Safety
/// `prior` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn privmap_prior_free(prior: *mut PrivmapPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Dirichlet prior from `{"alpha": ...}` or `{"counts": ..., "nu": ...}`.
///
/// # Safety
/// `json` must be nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn privmap_dirichlet_from_json(
    json: *const c_char,
    out: *mut *mut PrivmapDirichlet,
) -> PrivmapStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let d = io::parse_dirichlet(text, "<json>").map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(PrivmapDirichlet(d))))
    })
}

/// # Safety
/// `prior` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn privmap_dirichlet_free(prior: *mut PrivmapDirichlet) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

#[no_mangle]
pub extern "C" fn privmap_solve_config_default() -> PrivmapSolveConfig {
    let d = SolveConfig::default();
    PrivmapSolveConfig {
        epsilon: d.epsilon,
        max_iter: d.max_iter,
        restarts: d.restarts,
        inner_tol: d.inner_tol,
        inner_max_iter: d.inner_max_iter,
        seed: d.seed,
        delta: f64::NAN,
    }
}

unsafe fn config_arg(cfg: *const PrivmapSolveConfig) -> Result<SolveConfig, (PrivmapStatus, String)> {
    let c = handle(cfg, "config")?;
    Ok(SolveConfig {
        epsilon: c.epsilon,
        max_iter: c.max_iter,
        restarts: c.restarts,
        inner_tol: c.inner_tol,
        inner_max_iter: c.inner_max_iter,
        seed: c.seed,
        delta: if c.delta.is_nan() { None } else { Some(c.delta) },
    })
}

/// Minimizes the leakage to `prior` with random restarts.
///
/// # Safety
/// Pointers must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn privmap_solve(
    model: *const PrivmapModel,
    prior: *const PrivmapPrior,
    cfg: *const PrivmapSolveConfig,
    out: *mut *mut PrivmapResult,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = &handle(prior, "prior")?.0;
        let cfg = config_arg(cfg)?;
        let obj = dc_split(m, p).map_err(lib_err)?;
        let r = multistart(&obj, m, &cfg).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(PrivmapResult(r))))
    })
}

/// Maximizes the Dirichlet lower bound on the expected posterior cost. The
/// result's objective is the negated bound.
///
/// # Safety
/// Pointers must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn privmap_solve_dirichlet(
    model: *const PrivmapModel,
    prior: *const PrivmapDirichlet,
    cfg: *const PrivmapSolveConfig,
    out: *mut *mut PrivmapResult,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let d = &handle(prior, "prior")?.0;
        let cfg = config_arg(cfg)?;
        let obj = lb_dc_split(m, d).map_err(lib_err)?;
        let r = multistart(&obj, m, &cfg).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(PrivmapResult(r))))
    })
}

/// Final objective in nats, or NaN for a null handle.
///
/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn privmap_result_objective(res: *const PrivmapResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.0.objective)
}

/// Outer iterations performed, or 0 for a null handle.
///
/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn privmap_result_iterations(res: *const PrivmapResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.iterations)
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn privmap_result_status(
    res: *const PrivmapResult,
    out: *mut PrivmapSolveStatus,
) -> PrivmapStatus {
    guard(|| {
        let r = &handle(res, "result")?.0;
        let s = match r.status {
            privmap::Status::ConvergedStep => PrivmapSolveStatus::Converged,
            privmap::Status::MaxIterReached => PrivmapSolveStatus::MaxIter,
        };
        write_out(out, s)
    })
}

/// Copies the `|Y|×|Z|` channel into `buf` (row-major, `len` entries).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn privmap_result_channel(res: *const PrivmapResult, buf: *mut f64, len: usize) -> PrivmapStatus {
    guard(|| {
        let r = &handle(res, "result")?.0;
        let src = r.channel.matrix().as_slice();
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len != src.len() {
            return Err((
                PrivmapStatus::DimensionMismatch,
                format!("buffer holds {len} entries, channel has {}", src.len()),
            ));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `res` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn privmap_result_free(res: *mut PrivmapResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Information leakage (nats) to `prior` under a row-major channel. May be
/// `-inf` when the adversary's joint misses part of `p(x,y)`.
///
/// # Safety
/// Pointers must be valid; `channel` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn privmap_leakage(
    model: *const PrivmapModel,
    prior: *const PrivmapPrior,
    channel: *const f64,
    len: usize,
    out: *mut f64,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = &handle(prior, "prior")?.0;
        let ch = channel_arg(m, channel, len)?;
        write_out(out, evaluate_leakage(m, p, &ch).map_err(lib_err)?)
    })
}

/// Adversary's posterior cost (nats) under a row-major channel.
///
/// # Safety
/// Pointers must be valid; `channel` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn privmap_posterior_cost(
    model: *const PrivmapModel,
    prior: *const PrivmapPrior,
    channel: *const f64,
    len: usize,
    out: *mut f64,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = &handle(prior, "prior")?.0;
        let ch = channel_arg(m, channel, len)?;
        write_out(out, cost_posterior_limited(m, p, &ch).map_err(lib_err)?)
    })
}

/// Dirichlet lower bound (nats) on the expected posterior cost.
///
/// # Safety
/// Pointers must be valid; `channel` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn privmap_dirichlet_lower_bound(
    model: *const PrivmapModel,
    prior: *const PrivmapDirichlet,
    channel: *const f64,
    len: usize,
    out: *mut f64,
) -> PrivmapStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let d = &handle(prior, "prior")?.0;
        let ch = channel_arg(m, channel, len)?;
        write_out(out, dirichlet_lower_bound(m, d, &ch).map_err(lib_err)?)
    })
}
