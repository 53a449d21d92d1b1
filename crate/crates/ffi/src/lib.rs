//! C ABI over the `gaussflow` simulator.
//!
//! Every object crosses the boundary as an opaque pointer owned by the caller
//! and released with the matching `*_free`. Functions return a [`GfStatus`];
//! on failure a description is kept per thread and can be copied out with
//! [`gf_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gaussflow::entropy::entropy_point;
use gaussflow::flow::{advance_to, run_to_extinction, step, FlowConfig, FlowState};
use gaussflow::normalized::{normalized_step, NormalizedState};
use gaussflow::reference::sphere_ode;
use gaussflow::spaceform::{Frame, Kappa};
use gaussflow::sphere::{volume, Dim, SupportField};
use gaussflow::FlowError;

/// Result codes. Positive error values match the `gaussflow` process exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    Failed = 1,
    InvalidArgument = 2,
    ConvexityLost = 3,
    OutOfDomain = 4,
    Stalled = 5,
    NullPointer = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

impl From<&FlowError> for GfStatus {
    fn from(e: &FlowError) -> Self {
        match e.exit_code() {
            2 => GfStatus::InvalidArgument,
            3 => GfStatus::ConvexityLost,
            4 => GfStatus::OutOfDomain,
            5 => GfStatus::Stalled,
            _ => GfStatus::Failed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

enum Fail {
    Flow(FlowError),
    Status(GfStatus, String),
}

impl From<FlowError> for Fail {
    fn from(e: FlowError) -> Self {
        Fail::Flow(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(GfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Status(GfStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GfStatus::Ok
        }
        Ok(Err(Fail::Flow(e))) => {
            set_error(e.to_string());
            GfStatus::from(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            GfStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn kappa_of(k: c_int) -> Result<Kappa, Fail> {
    Kappa::from_int(k).map_err(Fail::Flow)
}

fn dim_of(n: usize) -> Result<Dim, Fail> {
    Dim::from_n(n).map_err(Fail::Flow)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Support function sampled on the direction grid.
pub struct GfField(SupportField);

/// Unnormalized flow state together with its configuration.
pub struct GfFlow {
    state: FlowState,
    cfg: FlowConfig,
}

/// Volume-normalized flow state together with its configuration.
pub struct GfNormalized {
    state: NormalizedState,
    cfg: FlowConfig,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn gf_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let k = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), k);
            *buf.add(k) = 0;
        }
        msg.len()
    })
}

/// Field from `len` samples with profile center `(cx, cy)`; `n` is 1 or 2.
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_field_new(
    n: usize,
    len: usize,
    values: *const f64,
    cx: f64,
    cy: f64,
    out: *mut *mut GfField,
) -> GfStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let grid = gaussflow::sphere::Grid::new(dim_of(n)?, len)?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let f = SupportField::new(grid, data, [cx, cy])?;
        write_out(out, boxed(GfField(f)), "out")
    })
}

/// Ball of `radius` about the origin.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_field_ball(n: usize, len: usize, radius: f64, out: *mut *mut GfField) -> GfStatus {
    guard(|| {
        let f = SupportField::ball(dim_of(n)?, len, radius)?;
        write_out(out, boxed(GfField(f)), "out")
    })
}

/// Ellipse (n = 1) or spheroid (n = 2) with semi-axes `a` (first axis) and `b`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_field_ellipse(n: usize, len: usize, a: f64, b: f64, out: *mut *mut GfField) -> GfStatus {
    guard(|| {
        let f = SupportField::ellipse(dim_of(n)?, len, a, b)?;
        write_out(out, boxed(GfField(f)), "out")
    })
}

/// # Safety
/// `field` must be null or a pointer obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gf_field_free(field: *mut GfField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of grid samples, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_field_len(field: *const GfField) -> usize {
    field.as_ref().map_or(0, |f| f.0.len())
}

/// Copies the samples into `out`, which must hold at least `cap` doubles.
///
/// # Safety
/// `field` must be a live handle and `out` valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_field_values(field: *const GfField, out: *mut f64, cap: usize) -> GfStatus {
    guard(|| {
        let f = &borrow(field, "field")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if cap < f.len() {
            return Err(Fail::Status(
                GfStatus::BufferTooSmall,
                format!("need {} values, buffer holds {cap}", f.len()),
            ));
        }
        ptr::copy_nonoverlapping(f.values().as_ptr(), out, f.len());
        Ok(())
    })
}

/// Enclosed volume (area for n = 1).
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_field_volume(field: *const GfField, out: *mut f64) -> GfStatus {
    guard(|| {
        let v = volume(&borrow(field, "field")?.0)?;
        write_out(out, v, "out")
    })
}

/// Entropy point `z` (two coordinates) and entropy value for exponent `alpha`.
///
/// # Safety
/// `field` must be a live handle; `z_out` must hold two doubles; `value_out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_entropy_point(
    field: *const GfField,
    alpha: f64,
    z_out: *mut f64,
    value_out: *mut f64,
) -> GfStatus {
    guard(|| {
        let (z, e) = entropy_point(&borrow(field, "field")?.0, alpha)?;
        if z_out.is_null() {
            return Err(null("z_out"));
        }
        z_out.write(z[0]);
        z_out.add(1).write(z[1]);
        write_out(value_out, e, "value_out")
    })
}

/// Extinction time of a geodesic sphere of radius `rho0` (`kappa` in {-1, 0, 1}).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_sphere_extinction_time(
    kappa: c_int,
    n: usize,
    alpha: f64,
    rho0: f64,
    out: *mut f64,
) -> GfStatus {
    guard(|| {
        let sol = sphere_ode(kappa_of(kappa)?, n, alpha, rho0)?;
        write_out(out, sol.t_star, "out")
    })
}

fn flow_config(alpha: f64, kappa: c_int, cfl_safety: f64, u: &SupportField) -> Result<FlowConfig, Fail> {
    let mut cfg = FlowConfig::new(alpha, kappa_of(kappa)?);
    if cfl_safety > 0.0 {
        cfg.cfl_safety = cfl_safety;
    } else if cfl_safety != 0.0 {
        return Err(invalid("cfl_safety must be positive, or 0 for the default"));
    }
    Ok(cfg.resolved_for(u)?)
}

/// Flows `field` until extinction; writes the extinction time and the limit
/// point (`n + 1` ambient coordinates into `point_out`, which must hold 3).
///
/// # Safety
/// `field` must be a live handle; `t_star_out` writable; `point_out` null or
/// valid for three doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_run_to_extinction(
    field: *const GfField,
    alpha: f64,
    kappa: c_int,
    t_star_out: *mut f64,
    point_out: *mut f64,
) -> GfStatus {
    guard(|| {
        let u = &borrow(field, "field")?.0;
        let cfg = flow_config(alpha, kappa, 0.0, u)?;
        let (rep, _) = run_to_extinction(u, &cfg)?;
        if !point_out.is_null() {
            for (k, v) in rep.extinction_point.iter().take(3).enumerate() {
                point_out.add(k).write(*v);
            }
        }
        write_out(t_star_out, rep.t_star, "t_star_out")
    })
}

/// Starts an unnormalized flow from a copy of `field`. A `cfl_safety` of 0
/// selects the default.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_flow_new(
    field: *const GfField,
    alpha: f64,
    kappa: c_int,
    cfl_safety: f64,
    out: *mut *mut GfFlow,
) -> GfStatus {
    guard(|| {
        let u = &borrow(field, "field")?.0;
        let cfg = flow_config(alpha, kappa, cfl_safety, u)?;
        let state = FlowState::new(u.clone(), &cfg)?;
        write_out(out, boxed(GfFlow { state, cfg }), "out")
    })
}

/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_flow_free(flow: *mut GfFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// One explicit step at the stable step size. The state is left unchanged on error.
///
/// # Safety
/// `flow` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_flow_step(flow: *mut GfFlow) -> GfStatus {
    guard(|| {
        let f = borrow_mut(flow, "flow")?;
        f.state = step(&f.state, &f.cfg)?;
        Ok(())
    })
}

/// Advances until time `tau` is reached exactly.
///
/// # Safety
/// `flow` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_flow_advance_to(flow: *mut GfFlow, tau: f64) -> GfStatus {
    guard(|| {
        let f = borrow_mut(flow, "flow")?;
        if !(tau >= f.state.tau) {
            return Err(invalid(format!("target {tau} lies before the current time {}", f.state.tau)));
        }
        let mut rows = Vec::new();
        f.state = advance_to(f.state.clone(), &f.cfg, tau, &mut rows)?;
        Ok(())
    })
}

/// Current time, inradius and circumradius; any output may be null.
///
/// # Safety
/// `flow` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_flow_status(
    flow: *const GfFlow,
    tau_out: *mut f64,
    r_minus_out: *mut f64,
    r_plus_out: *mut f64,
) -> GfStatus {
    guard(|| {
        let s = &borrow(flow, "flow")?.state;
        for (p, v) in [(tau_out, s.tau), (r_minus_out, s.geometry.r_minus), (r_plus_out, s.geometry.r_plus)] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Copy of the current support function.
///
/// # Safety
/// `flow` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_flow_field(flow: *const GfFlow, out: *mut *mut GfField) -> GfStatus {
    guard(|| {
        let s = &borrow(flow, "flow")?.state;
        write_out(out, boxed(GfField(s.field.clone())), "out")
    })
}

/// Normalized flow started from `field` rescaled to unit-ball volume.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_normalized_new(
    field: *const GfField,
    alpha: f64,
    kappa: c_int,
    out: *mut *mut GfNormalized,
) -> GfStatus {
    guard(|| {
        let u = &borrow(field, "field")?.0;
        let cfg = flow_config(alpha, kappa, 0.0, u)?;
        let state = NormalizedState::from_unnormalized(u, 0.0, Frame::identity(cfg.kappa), &cfg)?;
        write_out(out, boxed(GfNormalized { state, cfg }), "out")
    })
}

/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_normalized_free(flow: *mut GfNormalized) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// One step of the normalized flow.
///
/// # Safety
/// `flow` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_normalized_step(flow: *mut GfNormalized) -> GfStatus {
    guard(|| {
        let f = borrow_mut(flow, "flow")?;
        f.state = normalized_step(&f.state, &f.cfg)?;
        Ok(())
    })
}

/// Normalized time, roundness and soliton residual; any output may be null.
///
/// # Safety
/// `flow` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_normalized_status(
    flow: *const GfNormalized,
    t_out: *mut f64,
    roundness_out: *mut f64,
    residual_out: *mut f64,
) -> GfStatus {
    guard(|| {
        let s = &borrow(flow, "flow")?.state;
        for (p, v) in [(t_out, s.t), (roundness_out, s.roundness), (residual_out, s.soliton_residual)] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Runs a `gaussflow` command line (without the program name) and returns its
/// process exit code.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gf_run_command(argc: usize, argv: *const *const c_char) -> c_int {
    if argv.is_null() && argc > 0 {
        set_error("argv is null");
        return GfStatus::NullPointer as c_int;
    }
    let mut args = Vec::with_capacity(argc);
    for k in 0..argc {
        let p = *argv.add(k);
        if p.is_null() {
            set_error(format!("argv[{k}] is null"));
            return GfStatus::NullPointer as c_int;
        }
        match CStr::from_ptr(p).to_str() {
            Ok(s) => args.push(s.to_owned()),
            Err(_) => {
                set_error(format!("argv[{k}] is not UTF-8"));
                return GfStatus::InvalidArgument as c_int;
            }
        }
    }
    catch_unwind(|| gaussflow::run::main_with_args(&args)).unwrap_or(GfStatus::Panic as c_int)
}
