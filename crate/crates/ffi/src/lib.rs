//! C ABI for the mirror Langevin sampling library.
//!
//! Conventions:
//! * Opaque handles (`MllMap`, `MllPotential`) are created from the same
//!   JSON specs the CLI uses and released with the matching `_free`.
//! * Every fallible call returns an [`MllStatus`]; on failure
//!   [`mll_last_error_message`] describes the error for the calling thread.
//! * Vectors are caller-allocated `double` buffers with explicit lengths;
//!   sample tables are row-major `chains x dim`.
//! * All entry points catch panics and report `MLL_STATUS_PANIC` instead of
//!   unwinding across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DVector;

use mll_core::analysis::{mixing_constants, ConstantsInput};
use mll_core::config::{ExperimentConfig, MapSpec, PotentialSpec};
use mll_core::engine::{
    gbm_exact, mla_step_dual, mla_step_primal, run_chains, ChainOptions, InitLaw, ViolationPolicy,
};
use mll_core::error::MllError;
use mll_core::experiments::run_experiment;
use mll_core::maps::MirrorMap;
use mll_core::potentials::Potential;
use mll_core::transport::w2_1d;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MllStatus {
    MllStatusOk = 0,
    MllStatusInvalidArgument = 1,
    MllStatusDomainViolation = 2,
    MllStatusNoConvergence = 3,
    MllStatusUnsupported = 4,
    MllStatusSizeMismatch = 5,
    MllStatusTooLarge = 6,
    MllStatusNotContractive = 7,
    MllStatusExecutionFailed = 8,
    MllStatusIo = 9,
    MllStatusPanic = 10,
}

/// Opaque mirror-map handle.
pub struct MllMap(MirrorMap);
/// Opaque potential handle.
pub struct MllPotential(Potential);

/// Mixing-bound constants, mirrored as a plain C struct.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MllConstants {
    pub m: f64,
    pub big_m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub c1: f64,
    pub d1: f64,
    pub c2: f64,
    pub d2: f64,
    pub h_max: f64,
    pub u: f64,
    pub v: f64,
    pub c_mla: f64,
    pub w0_bound: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &MllError) -> MllStatus {
    match err {
        MllError::DomainViolation(_) => MllStatus::MllStatusDomainViolation,
        MllError::NoConvergence(_) => MllStatus::MllStatusNoConvergence,
        MllError::Unsupported(_) => MllStatus::MllStatusUnsupported,
        MllError::SizeMismatch(_) => MllStatus::MllStatusSizeMismatch,
        MllError::TooLarge(_) => MllStatus::MllStatusTooLarge,
        MllError::NotContractive(_) => MllStatus::MllStatusNotContractive,
        MllError::ExecutionFailed(_) => MllStatus::MllStatusExecutionFailed,
        MllError::Io(_) | MllError::Json(_) => MllStatus::MllStatusIo,
        MllError::ConfigInvalid(_)
        | MllError::DegenerateGrid(_)
        | MllError::DegeneratePair(_)
        | MllError::SingularConstraints(_)
        | MllError::InsufficientBurnIn(_) => MllStatus::MllStatusInvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> MllStatus + std::panic::UnwindSafe) -> MllStatus {
    match catch_unwind(f) {
        Ok(s) => s,
        Err(_) => {
            set_error("panic inside the library");
            MllStatus::MllStatusPanic
        }
    }
}

unsafe fn parse_cstr<'a>(ptr: *const c_char) -> Result<&'a str, MllStatus> {
    if ptr.is_null() {
        set_error("null string pointer");
        return Err(MllStatus::MllStatusInvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        MllStatus::MllStatusInvalidArgument
    })
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], MllStatus> {
    if ptr.is_null() {
        set_error("null buffer pointer");
        return Err(MllStatus::MllStatusInvalidArgument);
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mll_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's most recent error; valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn mll_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Build a mirror map from its JSON spec, e.g.
/// `{"kind": "orthant_log_barrier", "dim": 2}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mll_map_from_json(json: *const c_char, out: *mut *mut MllMap) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if out.is_null() {
            set_error("null output pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let text = match parse_cstr(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec: MapSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("invalid map spec: {e}"));
                return MllStatus::MllStatusInvalidArgument;
            }
        };
        match spec.build() {
            Ok(map) => {
                *out = Box::into_raw(Box::new(MllMap(map)));
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// # Safety
/// `map` must come from `mll_map_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mll_map_free(map: *mut MllMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mll_map_primal_dim(map: *const MllMap) -> usize {
    if map.is_null() {
        return 0;
    }
    (*map).0.primal_dim()
}

/// # Safety
/// `map` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mll_map_noise_dim(map: *const MllMap) -> usize {
    if map.is_null() {
        return 0;
    }
    (*map).0.noise_dim()
}

/// Mirror map `y = grad phi(x)`; `x` and `y_out` have length `primal_dim`.
///
/// # Safety
/// Buffers must hold `len` doubles; `map` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mll_map_grad(
    map: *const MllMap,
    x: *const f64,
    len: usize,
    y_out: *mut f64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || y_out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let xs = match slice_arg(x, len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match (*map).0.grad(&DVector::from_column_slice(xs)) {
            Ok(y) => {
                ptr::copy_nonoverlapping(y.as_slice().as_ptr(), y_out, y.len());
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Inverse mirror map `x = (grad phi)^{-1}(y)`.
///
/// # Safety
/// Buffers must hold `len` doubles; `map` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mll_map_dual_grad(
    map: *const MllMap,
    y: *const f64,
    len: usize,
    x_out: *mut f64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || x_out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let ys = match slice_arg(y, len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match (*map).0.dual_grad(&DVector::from_column_slice(ys)) {
            Ok(x) => {
                ptr::copy_nonoverlapping(x.as_slice().as_ptr(), x_out, x.len());
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Bregman divergence of the barrier between two interior points.
///
/// # Safety
/// Buffers must hold `len` doubles; `map` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mll_map_bregman(
    map: *const MllMap,
    x: *const f64,
    x2: *const f64,
    len: usize,
    out: *mut f64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let (a, b) = match (slice_arg(x, len), slice_arg(x2, len)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match (*map).0.bregman(&DVector::from_column_slice(a), &DVector::from_column_slice(b)) {
            Ok(v) => {
                *out = v;
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Build a potential from its JSON spec, e.g.
/// `{"kind": "relative_affine", "lambda": 2.0, "b": [1.0]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mll_potential_from_json(
    json: *const c_char,
    out: *mut *mut MllPotential,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if out.is_null() {
            set_error("null output pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let text = match parse_cstr(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec: PotentialSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("invalid potential spec: {e}"));
                return MllStatus::MllStatusInvalidArgument;
            }
        };
        match spec.build() {
            Ok(pot) => {
                *out = Box::into_raw(Box::new(MllPotential(pot)));
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// # Safety
/// `pot` must come from `mll_potential_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mll_potential_free(pot: *mut MllPotential) {
    if !pot.is_null() {
        drop(Box::from_raw(pot));
    }
}

/// Dual drift `g(y) = grad f(dual_grad(y))`.
///
/// # Safety
/// Buffers must hold `len` doubles; handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn mll_dual_drift(
    map: *const MllMap,
    pot: *const MllPotential,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || pot.is_null() || out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let ys = match slice_arg(y, len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match (*pot).0.dual_drift(&(*map).0, &DVector::from_column_slice(ys)) {
            Ok(g) => {
                ptr::copy_nonoverlapping(g.as_slice().as_ptr(), out, g.len());
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// One dual-space step `y - h g(y) + sqrt(2h) A(y) z`; `z` has length
/// `noise_dim`, `y` and `out` have length `primal_dim`.
///
/// # Safety
/// Buffers must match the stated lengths; handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn mll_step_dual(
    map: *const MllMap,
    pot: *const MllPotential,
    y: *const f64,
    y_len: usize,
    h: f64,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || pot.is_null() || out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let ys = match slice_arg(y, y_len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        let zs = match slice_arg(z, z_len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match mla_step_dual(
            &(*map).0,
            &(*pot).0,
            &DVector::from_column_slice(ys),
            h,
            &DVector::from_column_slice(zs),
        ) {
            Ok(next) => {
                ptr::copy_nonoverlapping(next.as_slice().as_ptr(), out, next.len());
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// One primal-space step through the mirror map.
///
/// # Safety
/// Buffers must match the stated lengths; handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn mll_step_primal(
    map: *const MllMap,
    pot: *const MllPotential,
    x: *const f64,
    x_len: usize,
    h: f64,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || pot.is_null() || out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let xs = match slice_arg(x, x_len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        let zs = match slice_arg(z, z_len) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match mla_step_primal(
            &(*map).0,
            &(*pot).0,
            &DVector::from_column_slice(xs),
            h,
            &DVector::from_column_slice(zs),
        ) {
            Ok(next) => {
                ptr::copy_nonoverlapping(next.as_slice().as_ptr(), out, next.len());
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Run independent chains from a Gaussian law around the dual minimizer
/// (`init_std` standard deviation) and write the final iterates into
/// `samples_out` (row-major `chains x primal_dim`). `policy`: 0 fail,
/// 1 reject/resample, 2 clamp.
///
/// # Safety
/// `samples_out` must hold `chains * primal_dim` doubles; handles valid.
#[no_mangle]
pub unsafe extern "C" fn mll_run_chains(
    map: *const MllMap,
    pot: *const MllPotential,
    h: f64,
    iterations: usize,
    chains: usize,
    seed: u64,
    policy: i32,
    init_std: f64,
    samples_out: *mut f64,
    violations_out: *mut u64,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if map.is_null() || pot.is_null() || samples_out.is_null() {
            set_error("null pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let map = &(*map).0;
        let pot = &(*pot).0;
        let policy = match policy {
            0 => ViolationPolicy::Fail,
            1 => ViolationPolicy::RejectResample,
            2 => ViolationPolicy::ClampEpsilon,
            _ => {
                set_error("policy must be 0 (fail), 1 (reject_resample) or 2 (clamp_epsilon)");
                return MllStatus::MllStatusInvalidArgument;
            }
        };
        let run = || -> mll_core::Result<(mll_core::samples::SampleSet, u64)> {
            let mean = pot.minimizer_dual(map)?;
            let law = InitLaw::Gaussian { mean, std: init_std };
            let init = law.draw_set(chains, seed, Some(map))?;
            let opts = ChainOptions { h, iterations, policy, h_cap: None };
            let (set, stats) = run_chains(map, pot, &init, &opts, seed)?;
            Ok((set, stats.violations))
        };
        match run() {
            Ok((set, violations)) => {
                let d = set.dim();
                for i in 0..set.len() {
                    for j in 0..d {
                        *samples_out.add(i * d + j) = set.data()[(i, j)];
                    }
                }
                if !violations_out.is_null() {
                    *violations_out = violations;
                }
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Exact geometric-Brownian-motion solution
/// `y0 exp(-(1 + alpha) t + sqrt(2 alpha) w_t)`.
#[no_mangle]
pub extern "C" fn mll_gbm_exact(y0: f64, alpha: f64, t: f64, w_t: f64) -> f64 {
    gbm_exact(y0, alpha, t, w_t)
}

/// Exact empirical 1-d Wasserstein-2 distance between equal-size samples.
///
/// # Safety
/// `a` and `b` must hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn mll_w2_1d(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if out.is_null() {
            set_error("null output pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        let (xs, ys) = match (slice_arg(a, n), slice_arg(b, n)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match w2_1d(xs, ys) {
            Ok(est) => {
                *out = est.value;
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Closed-form mixing constants from instance numbers; fails with
/// `MLL_STATUS_NOT_CONTRACTIVE` when `alpha >= m`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mll_mixing_constants(
    m: f64,
    big_m: f64,
    alpha: f64,
    dim: usize,
    y_star_norm: f64,
    a_star_hs: f64,
    g_star_norm: f64,
    e_y0_sq: f64,
    e_target_sq: f64,
    out: *mut MllConstants,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        if out.is_null() {
            set_error("null output pointer");
            return MllStatus::MllStatusInvalidArgument;
        }
        match mixing_constants(&ConstantsInput {
            rel_m: m,
            rel_big_m: big_m,
            alpha,
            dim,
            y_star_norm,
            a_star_hs,
            g_star_norm,
            e_y0_sq,
            e_target_sq,
        }) {
            Ok(c) => {
                *out = MllConstants {
                    m: c.m,
                    big_m: c.big_m,
                    alpha: c.alpha,
                    beta: c.beta,
                    c0: c.c0,
                    c1: c.c1,
                    d1: c.d1,
                    c2: c.c2,
                    d2: c.d2,
                    h_max: c.h_max,
                    u: c.u,
                    v: c.v,
                    c_mla: c.c_mla,
                    w0_bound: c.w0_bound,
                };
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Run a full experiment from its JSON config, writing the report files
/// into `out_dir`. `passed_out` receives 1 when every check passed.
///
/// # Safety
/// `config_json` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mll_run_experiment_json(
    config_json: *const c_char,
    out_dir: *const c_char,
    passed_out: *mut i32,
) -> MllStatus {
    guard(AssertUnwindSafe(|| {
        let text = match parse_cstr(config_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let dir = match parse_cstr(out_dir) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let run = || -> mll_core::Result<bool> {
            let cfg = ExperimentConfig::from_json(text)?;
            let report = run_experiment(&cfg)?;
            report.write(std::path::Path::new(dir))?;
            Ok(report.passed)
        };
        match run() {
            Ok(passed) => {
                if !passed_out.is_null() {
                    *passed_out = i32::from(passed);
                }
                MllStatus::MllStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}
