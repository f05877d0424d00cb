//! C ABI over `biteuler`.
//!
//! Every function returns a [`BitStatus`]; on failure the message is available
//! from [`bit_last_error`] on the same thread until the next failing call.
//! Models and error tables are opaque handles released with their `_free`
//! functions. Panics are caught at the boundary and reported as
//! [`BitStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use biteuler::brownian::generate_path;
use biteuler::diagnostics::{self, AnalysisConstants};
use biteuler::experiments::{self, ConvergenceConfig, Reference};
use biteuler::models::{catalog_entry, ModelCatalogEntry};
use biteuler::schemes::run_path;
use biteuler::taming::{self, TamingParams};
use biteuler::{Error, ErrorTable, GridSpec, SchemeKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NotDivisible = 4,
    UnknownModel = 5,
    NoExactSolution = 6,
    NoLyapunov = 7,
    Inadmissible = 8,
    InsufficientData = 9,
    OutOfRange = 10,
    Io = 11,
    Panic = 12,
}

pub const BIT_SCHEME_EULER_MARUYAMA: u32 = 0;
pub const BIT_SCHEME_DRIFT_TAMED: u32 = 1;
pub const BIT_SCHEME_STOPPED: u32 = 2;

/// Opaque catalog model.
pub struct BitModel {
    entry: ModelCatalogEntry,
}

/// Opaque strong error table.
pub struct BitErrorTable {
    table: ErrorTable,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BitErrorRow {
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub sup_error: f64,
    pub std_error: f64,
    pub overflow_fraction: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BitRateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BitStatus {
    match e {
        Error::Dimension { .. } => BitStatus::Dimension,
        Error::NotDivisible { .. } => BitStatus::NotDivisible,
        Error::UnknownModel(_) => BitStatus::UnknownModel,
        Error::NoExactSolution(_) => BitStatus::NoExactSolution,
        Error::NoLyapunov(_) => BitStatus::NoLyapunov,
        Error::Inadmissible(_) => BitStatus::Inadmissible,
        Error::InsufficientData { .. } | Error::SampleCount { .. } => BitStatus::InsufficientData,
        Error::IndexOutOfRange { .. } | Error::TimeOutOfRange { .. } | Error::OffsetOutOfRange { .. } => {
            BitStatus::OutOfRange
        }
        Error::Io(_) => BitStatus::Io,
        _ => BitStatus::InvalidArgument,
    }
}

struct Fail(BitStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BitStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BitStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside biteuler");
            BitStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(BitStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn scheme(code: u32) -> Result<SchemeKind, Fail> {
    match code {
        BIT_SCHEME_EULER_MARUYAMA => Ok(SchemeKind::EulerMaruyama),
        BIT_SCHEME_DRIFT_TAMED => Ok(SchemeKind::DriftTamed),
        BIT_SCHEME_STOPPED => Ok(SchemeKind::StoppedBit),
        _ => Err(Fail(BitStatus::InvalidArgument, format!("unknown scheme code {code}"))),
    }
}

/// Message of the last failing call on this thread; empty if none. Valid until the next failure.
#[no_mangle]
pub extern "C" fn bit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds catalog model `id` with `n_params` name/value overrides.
///
/// # Safety
/// `id` and each `param_names[i]` must be NUL-terminated strings; the arrays
/// must hold `n_params` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bit_model_new(
    id: *const c_char,
    param_names: *const *const c_char,
    param_values: *const f64,
    n_params: usize,
    horizon: f64,
    out: *mut *mut BitModel,
) -> BitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let id = text(id, "id")?;
        let values = input(param_values, n_params, "param_values")?;
        let mut params = Vec::with_capacity(n_params);
        if n_params > 0 && param_names.is_null() {
            return Err(null("param_names"));
        }
        for (i, v) in values.iter().enumerate() {
            params.push((text(*param_names.add(i), "parameter name")?.to_string(), *v));
        }
        let entry = catalog_entry(id, &params, horizon)?;
        *out = Box::into_raw(Box::new(BitModel { entry }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`bit_model_new`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bit_model_free(model: *mut BitModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State and noise dimensions of a model.
///
/// # Safety
/// `model` must be a live handle; `d` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn bit_model_dims(model: *const BitModel, d: *mut usize, m: *mut usize) -> BitStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if d.is_null() || m.is_null() {
            return Err(null("d or m"));
        }
        *d = model.entry.model.d;
        *m = model.entry.model.m;
        Ok(())
    })
}

/// Default initial state of a model, written to `out` (length `d`).
///
/// # Safety
/// `model` must be a live handle; `out` must hold `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn bit_model_default_x0(model: *const BitModel, out: *mut f64) -> BitStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let x0 = &model.entry.default_x0;
        output(out, x0.len(), "out")?.copy_from_slice(x0);
        Ok(())
    })
}

unsafe fn taming_call(
    h: f64,
    x: *const f64,
    m: usize,
    out: *mut f64,
    f: fn(&TamingParams, &[f64]) -> Vec<f64>,
) -> BitStatus {
    guard(|| {
        let params = TamingParams::new(h, m)?;
        let x = input(x, m, "x")?;
        output(out, m, "out")?.copy_from_slice(&f(&params, x));
        Ok(())
    })
}

/// Coordinatewise `x exp(-x^4/h)`.
///
/// # Safety
/// `x` and `out` must each hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn bit_tame(h: f64, x: *const f64, m: usize, out: *mut f64) -> BitStatus {
    taming_call(h, x, m, out, taming::tame)
}

/// Diagonal of the Jacobian of the taming map.
///
/// # Safety
/// `x` and `out` must each hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn bit_tame_jacobian_diag(h: f64, x: *const f64, m: usize, out: *mut f64) -> BitStatus {
    taming_call(h, x, m, out, taming::tame_jacobian_diag)
}

/// Coordinatewise Laplacian of the taming map.
///
/// # Safety
/// `x` and `out` must each hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn bit_tame_laplacian(h: f64, x: *const f64, m: usize, out: *mut f64) -> BitStatus {
    taming_call(h, x, m, out, taming::tame_laplacian)
}

/// Stopping radius `exp(sqrt|ln(N/T)|)`.
#[no_mangle]
pub extern "C" fn bit_stopping_threshold(n: usize, horizon: f64) -> f64 {
    taming::stopping_threshold(n, horizon)
}

/// Runs one path of `scheme` on `n` steps driven by Brownian path `(seed, path_index)`.
///
/// `states` receives `(n + 1) d` doubles, row `k` being the state at `t_k`.
///
/// # Safety
/// `model` must be a live handle; `x0` must hold `d` doubles, `states`
/// `(n + 1) d`; `tau_index` may be null.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bit_run_path(
    model: *const BitModel,
    scheme_code: u32,
    horizon: f64,
    n: usize,
    x0: *const f64,
    seed: u64,
    path_index: u64,
    states: *mut f64,
    tau_index: *mut usize,
) -> BitStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.entry.model;
        let kind = scheme(scheme_code)?;
        let x0 = input(x0, model.d, "x0")?;
        let grid = GridSpec::new(horizon, n)?;
        let path = generate_path(horizon, n, model.m, seed, path_index)?;
        let run = run_path(kind, model, &grid, x0, &path)?;
        let len = (n + 1).checked_mul(model.d).ok_or_else(|| Fail(BitStatus::InvalidArgument, "n too large".into()))?;
        output(states, len, "states")?.copy_from_slice(&run.states);
        if !tau_index.is_null() {
            *tau_index = run.tau_index;
        }
        Ok(())
    })
}

/// Strong error table of `scheme_code` against the exact solution
/// (`reference_code < 0`) or against scheme `reference_code` on `n_ref` steps.
///
/// # Safety
/// `model` must be a live handle; `ns` must hold `n_len` entries; `x0` is
/// null (catalog default) or holds `d` doubles; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bit_strong_error(
    model: *const BitModel,
    scheme_code: u32,
    reference_code: i32,
    r: f64,
    horizon: f64,
    ns: *const usize,
    n_len: usize,
    n_ref: usize,
    paths: usize,
    seed: u64,
    x0: *const f64,
    out: *mut *mut BitErrorTable,
) -> BitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let entry = &model.as_ref().ok_or_else(|| null("model"))?.entry;
        if n_len > 0 && ns.is_null() {
            return Err(null("ns"));
        }
        let ns = if n_len == 0 { Vec::new() } else { slice::from_raw_parts(ns, n_len).to_vec() };
        let reference =
            if reference_code < 0 { Reference::Exact } else { Reference::FineGrid(scheme(reference_code as u32)?) };
        let x0 = if x0.is_null() { entry.default_x0.clone() } else { input(x0, entry.model.d, "x0")?.to_vec() };
        let config = ConvergenceConfig {
            model: entry.id.to_string(),
            params: entry.params.clone(),
            scheme: scheme(scheme_code)?,
            r,
            horizon,
            ns,
            n_ref,
            paths,
            seed,
            reference,
            x0: Some(x0.clone()),
        };
        let table = experiments::strong_error_with(&entry.model, &x0, &config)?;
        *out = Box::into_raw(Box::new(BitErrorTable { table }));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`bit_strong_error`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bit_error_table_free(table: *mut BitErrorTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bit_error_table_len(table: *const BitErrorTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.rows.len())
}

/// # Safety
/// `table` must be a live handle; `row` writable.
#[no_mangle]
pub unsafe extern "C" fn bit_error_table_row(
    table: *const BitErrorTable,
    index: usize,
    row: *mut BitErrorRow,
) -> BitStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.table;
        let row = row.as_mut().ok_or_else(|| null("row"))?;
        let r = t.rows.get(index).ok_or(Error::IndexOutOfRange { index, steps: t.rows.len() })?;
        *row = BitErrorRow {
            n: r.n,
            paths: r.paths,
            seed: r.seed,
            sup_error: r.sup_error,
            std_error: r.std_error,
            overflow_fraction: r.overflow_fraction,
        };
        Ok(())
    })
}

/// Least-squares slope of `ln error` against `ln(T/N)`.
///
/// # Safety
/// `table` must be a live handle; `fit` writable.
#[no_mangle]
pub unsafe extern "C" fn bit_error_table_fit(table: *const BitErrorTable, fit: *mut BitRateFit) -> BitStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.table;
        let fit = fit.as_mut().ok_or_else(|| null("fit"))?;
        let f = experiments::fit_rate(t)?;
        *fit = BitRateFit { slope: f.slope, intercept: f.intercept, residual: f.residual };
        Ok(())
    })
}

/// `eps^N` for the given constants; `+inf` when it overflows.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bit_epsilon_n(c: f64, p: u32, horizon: f64, m: usize, n: usize, out: *mut f64) -> BitStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = diagnostics::epsilon_n(&AnalysisConstants::new(c, p, horizon, m, 0.0, n)?);
        Ok(())
    })
}

/// Bound on `E[U(Y_t)]` given `E[U(Y_0)] = eu0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bit_moment_bound(
    c: f64,
    p: u32,
    horizon: f64,
    m: usize,
    rho: f64,
    n: usize,
    t: f64,
    eu0: f64,
    out: *mut f64,
) -> BitStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = diagnostics::moment_bound(&AnalysisConstants::new(c, p, horizon, m, rho, n)?, t, eu0)?;
        Ok(())
    })
}
