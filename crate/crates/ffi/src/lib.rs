//! C ABI over the `unifeed` solvers and simulator.
//!
//! Objects are opaque handles created by `*_new`/`*_solve` style functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`UnifeedStatus`]; on failure a message is kept per thread and can be read
//! with [`unifeed_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use unifeed::capacity::{solve_capacity, CapacityOptions, CapacityResult};
use unifeed::channel::{builtin, ChannelDocument, Family, UnifilarChannelSpec};
use unifeed::error::Error;
use unifeed::exponent::{solve_ctilde1, ExponentOptions, ExponentReport};
use unifeed::scheme::{run_episode, SchemeConfig, SchemePolicies, Variant};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnifeedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidChannel = 3,
    InvalidConfig = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnifeedVariant {
    OneStage = 0,
    TwoStageFull = 1,
    TwoStageAlternative = 2,
}

impl From<UnifeedVariant> for Variant {
    fn from(v: UnifeedVariant) -> Self {
        match v {
            UnifeedVariant::OneStage => Variant::OneStage,
            UnifeedVariant::TwoStageFull => Variant::TwoStageFull,
            UnifeedVariant::TwoStageAlternative => Variant::TwoStageAlternative,
        }
    }
}

/// Outcome of one simulated transmission.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct UnifeedEpisode {
    /// Stopping time (channel uses).
    pub t: u64,
    pub message: u64,
    pub decoded: u64,
    pub error: bool,
    pub truncated: bool,
}

pub struct UnifeedChannel {
    spec: UnifilarChannelSpec,
}

pub struct UnifeedCapacity {
    result: CapacityResult,
}

pub struct UnifeedBounds {
    report: ExponentReport,
}

pub struct UnifeedSimulation {
    spec: UnifilarChannelSpec,
    policies: SchemePolicies,
    cfg: SchemeConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UnifeedStatus {
    match e.category() {
        "channel" => UnifeedStatus::InvalidChannel,
        "config" => UnifeedStatus::InvalidConfig,
        "io" => UnifeedStatus::Io,
        _ => UnifeedStatus::Runtime,
    }
}

enum Fail {
    Null(&'static str),
    Utf8,
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> UnifeedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UnifeedStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            UnifeedStatus::NullPointer
        }
        Ok(Err(Fail::Utf8)) => {
            set_error("string argument is not valid UTF-8".into());
            UnifeedStatus::InvalidUtf8
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            UnifeedStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8)
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = value;
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn unifeed_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn unifeed_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds one of the named families (`trapdoor`, `chemical`, `symmetric`,
/// `asymmetric`) from `n_params` parameters.
///
/// # Safety
/// `family` must be a NUL-terminated string, `params` must point to
/// `n_params` doubles (or be NULL when `n_params` is 0), and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_channel_builtin(
    family: *const c_char,
    params: *const f64,
    n_params: usize,
    out: *mut *mut UnifeedChannel,
) -> UnifeedStatus {
    guard(|| {
        let family: Family = str_arg(family, "family")?.parse()?;
        let params = if n_params == 0 {
            &[][..]
        } else if params.is_null() {
            return Err(Fail::Null("params"));
        } else {
            std::slice::from_raw_parts(params, n_params)
        };
        put(out, UnifeedChannel { spec: builtin(family, params)? })
    })
}

/// Parses a channel JSON document (explicit kernel or family form).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_channel_from_json(json: *const c_char, out: *mut *mut UnifeedChannel) -> UnifeedStatus {
    guard(|| {
        let doc = ChannelDocument::from_json(str_arg(json, "json")?)?;
        put(out, UnifeedChannel { spec: doc.build()? })
    })
}

/// # Safety
/// `channel` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unifeed_channel_free(channel: *mut UnifeedChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

/// Alphabet sizes of a channel.
///
/// # Safety
/// `channel` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_channel_dims(
    channel: *const UnifeedChannel,
    nx: *mut usize,
    ny: *mut usize,
    ns: *mut usize,
) -> UnifeedStatus {
    guard(|| {
        let c = obj(channel, "channel")?;
        write(nx, c.spec.nx())?;
        write(ny, c.spec.ny())?;
        write(ns, c.spec.ns())
    })
}

/// Whether every kernel entry is positive.
///
/// # Safety
/// `channel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_channel_strictly_positive(channel: *const UnifeedChannel, out: *mut bool) -> UnifeedStatus {
    guard(|| write(out, obj(channel, "channel")?.spec.strictly_positive()))
}

/// Solves the capacity problem. Non-positive `grid_res`, `action_res` or
/// `tol` select the defaults (1/200, 1/100, 1e-6).
///
/// # Safety
/// `channel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_capacity_solve(
    channel: *const UnifeedChannel,
    grid_res: f64,
    action_res: f64,
    tol: f64,
    out: *mut *mut UnifeedCapacity,
) -> UnifeedStatus {
    guard(|| {
        let c = obj(channel, "channel")?;
        let mut opts = CapacityOptions::default();
        if grid_res > 0.0 {
            opts.grid_res = grid_res;
        }
        if action_res > 0.0 {
            opts.action_res = action_res;
        }
        if tol > 0.0 {
            opts.tol = tol;
        }
        put(out, UnifeedCapacity { result: solve_capacity(&c.spec, &opts)? })
    })
}

/// Capacity estimate in bits per channel use.
///
/// # Safety
/// `capacity` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_capacity_value(capacity: *const UnifeedCapacity, out: *mut f64) -> UnifeedStatus {
    guard(|| write(out, obj(capacity, "capacity")?.result.capacity))
}

/// # Safety
/// `capacity` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unifeed_capacity_free(capacity: *mut UnifeedCapacity) {
    if !capacity.is_null() {
        drop(Box::from_raw(capacity));
    }
}

/// Solves for the stage-two exponent constants with default settings.
///
/// # Safety
/// `channel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_bounds_solve(channel: *const UnifeedChannel, out: *mut *mut UnifeedBounds) -> UnifeedStatus {
    guard(|| {
        let c = obj(channel, "channel")?;
        put(out, UnifeedBounds { report: solve_ctilde1(&c.spec, &ExponentOptions::default())? })
    })
}

/// `C~1` in bits; `INFINITY` when unbounded.
///
/// # Safety
/// `bounds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_bounds_ctilde1(bounds: *const UnifeedBounds, out: *mut f64) -> UnifeedStatus {
    guard(|| write(out, obj(bounds, "bounds")?.report.ctilde1.value()))
}

/// `C~1*` in bits (reverse divergence under the same policies).
///
/// # Safety
/// `bounds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_bounds_ctilde1_star(bounds: *const UnifeedBounds, out: *mut f64) -> UnifeedStatus {
    guard(|| write(out, obj(bounds, "bounds")?.report.ctilde1_star.value()))
}

/// # Safety
/// `bounds` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unifeed_bounds_free(bounds: *mut UnifeedBounds) {
    if !bounds.is_null() {
        drop(Box::from_raw(bounds));
    }
}

/// Sets up a simulator. The handles are copied; they may be freed afterwards.
/// `precision_bits` of 0 selects 256.
///
/// # Safety
/// All handles must be live and `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn unifeed_simulation_new(
    channel: *const UnifeedChannel,
    capacity: *const UnifeedCapacity,
    bounds: *const UnifeedBounds,
    k: u32,
    pe_target: f64,
    p0: f64,
    variant: UnifeedVariant,
    precision_bits: u32,
    out: *mut *mut UnifeedSimulation,
) -> UnifeedStatus {
    guard(|| {
        let c = obj(channel, "channel")?;
        let cap = obj(capacity, "capacity")?;
        let b = obj(bounds, "bounds")?;
        let mut cfg = SchemeConfig::new(k, pe_target, variant.into());
        cfg.p0 = p0;
        if precision_bits > 0 {
            cfg.precision_bits = precision_bits;
        }
        cfg.validate()?;
        let policies = SchemePolicies::new(&c.spec, cap.result.policy.clone(), b.report.policies.clone())?;
        put(
            out,
            UnifeedSimulation {
                spec: c.spec.clone(),
                policies,
                cfg,
            },
        )
    })
}

/// Runs one episode; the same seed always gives the same episode.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unifeed_simulation_run(sim: *const UnifeedSimulation, seed: u64, out: *mut UnifeedEpisode) -> UnifeedStatus {
    guard(|| {
        let s = obj(sim, "simulation")?;
        let r = run_episode(&s.spec, &s.policies, &s.cfg, seed)?;
        write(
            out,
            UnifeedEpisode {
                t: r.t,
                message: r.w,
                decoded: r.decoded,
                error: r.error,
                truncated: r.truncated,
            },
        )
    })
}

/// # Safety
/// `sim` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unifeed_simulation_free(sim: *mut UnifeedSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
