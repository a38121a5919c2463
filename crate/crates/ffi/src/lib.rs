//! C ABI over the seesim simulator.
//!
//! All quantities are SI: m, m³, rad, N, N/m, m/s, rad/s. Every function
//! returns a [`SeeStatus`]; on failure [`see_last_error`] describes the cause.
//! Handles are not thread-safe; use one handle per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use seesim::config::{parse_config, RobotConfig};
use seesim::control::apply_open_loop;
use seesim::environment::serial_stiffness;
use seesim::mechanics::{Vec3, Vec6};
use seesim::model::{SeeModel, SeeState};
use seesim::workspace::{force_deflection, KminEstimate, Requirement};
use seesim::SeeError;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    LockedDirection = 5,
    Panic = 6,
}

/// Opaque simulator instance.
pub struct SeeHandle {
    config: RobotConfig,
    model: SeeModel,
    state: SeeState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &SeeError) -> SeeStatus {
    match e {
        SeeError::LockedDirection => SeeStatus::LockedDirection,
        SeeError::Config { .. } => SeeStatus::Config,
        SeeError::Context { source, .. } => status_of(source),
        e if e.is_input_error() => SeeStatus::InvalidArgument,
        _ => SeeStatus::Solver,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SeeStatus>) -> SeeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SeeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SeeStatus::Panic
        }
    }
}

fn fail(e: SeeError) -> SeeStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> SeeStatus {
    set_error(&format!("{what} is null"));
    SeeStatus::NullPointer
}

/// Message of the last failed call on this thread. Valid until the next call.
#[no_mangle]
pub extern "C" fn see_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a simulator from a TOML configuration (`NULL` for defaults).
///
/// # Safety
/// `config_toml` must be null or a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn see_new(config_toml: *const c_char, out: *mut *mut SeeHandle) -> SeeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = if config_toml.is_null() {
            ""
        } else {
            CStr::from_ptr(config_toml).to_str().map_err(|_| {
                set_error("configuration is not valid UTF-8");
                SeeStatus::InvalidArgument
            })?
        };
        let config = parse_config(text).map_err(fail)?;
        let model = SeeModel::new(config.geometry.clone()).map_err(fail)?;
        let state = model.deflated_state();
        *out = Box::into_raw(Box::new(SeeHandle { config, model, state }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from [`see_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn see_free(h: *mut SeeHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Returns the simulator to the pre-filled (zero injected volume) state.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn see_reset(h: *mut SeeHandle) -> SeeStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        h.state = h.model.deflated_state();
        Ok(())
    })
}

/// Number of actuators.
///
/// # Safety
/// `h` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn see_actuator_count(h: *const SeeHandle) -> usize {
    h.as_ref().map_or(0, |h| h.model.n())
}

unsafe fn slice<'a>(p: *const f64, n: usize, expected: usize, what: &str) -> Result<&'a [f64], SeeStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    if n != expected {
        set_error(&format!("{what} has length {n}, expected {expected}"));
        return Err(SeeStatus::InvalidArgument);
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Moves quasi-statically from the current state to absolute injected volumes [m³].
///
/// # Safety
/// `h` must be a live handle; `volumes` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn see_set_volumes(h: *mut SeeHandle, volumes: *const f64, n: usize) -> SeeStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        let v = slice(volumes, n, h.model.n(), "volumes")?;
        h.model.check_volumes(v).map_err(fail)?;
        let dv: Vec<f64> = v.iter().zip(&h.state.volumes).map(|(a, b)| a - b).collect();
        let mut next = h.state.clone();
        h.model
            .advance(&mut next, &dv, &seesim::mechanics::Wrench::zero(), None, 1, &mut |_| {})
            .map_err(fail)?;
        h.state = next;
        Ok(())
    })
}

/// Advances one control period under an open-loop tip velocity command.
///
/// `vz` [m/s] along the probe axis, `wx`, `wy` [rad/s]. Writes the actuator
/// saturation flags (1 saturated) to `saturated` when it is not null.
///
/// # Safety
/// `h` must be a live handle; `saturated` null or writable for `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn see_step(
    h: *mut SeeHandle,
    vz: f64,
    wx: f64,
    wy: f64,
    saturated: *mut u8,
    n: usize,
) -> SeeStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        if ![vz, wx, wy].iter().all(|x| x.is_finite()) {
            set_error("velocity command is not finite");
            return Err(SeeStatus::InvalidArgument);
        }
        if !saturated.is_null() && n != h.model.n() {
            set_error(&format!("saturated has length {n}, expected {}", h.model.n()));
            return Err(SeeStatus::InvalidArgument);
        }
        let cfg = h.config.control;
        let mut next = h.state.clone();
        let step = apply_open_loop(&h.model, &mut next, &Vec6::new(0.0, 0.0, vz, wx, wy, 0.0), &cfg, cfg.dt(), None)
            .map_err(fail)?;
        h.state = next;
        if !saturated.is_null() {
            let out = std::slice::from_raw_parts_mut(saturated, n);
            for (o, s) in out.iter_mut().zip(&step.saturated) {
                *o = u8::from(*s);
            }
        }
        Ok(())
    })
}

/// Tip position [m] and rotation vector [rad] relative to the pre-filled state.
///
/// # Safety
/// `h` must be a live handle; both outputs must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn see_tip_pose(h: *const SeeHandle, position: *mut f64, rotation: *mut f64) -> SeeStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if position.is_null() || rotation.is_null() {
            return Err(null("output"));
        }
        let tilt = h.state.tilt();
        let p = std::slice::from_raw_parts_mut(position, 3);
        let r = std::slice::from_raw_parts_mut(rotation, 3);
        p.copy_from_slice(h.state.position.as_slice());
        r.copy_from_slice(tilt.as_slice());
        Ok(())
    })
}

/// Injected volumes [m³].
///
/// # Safety
/// `h` must be a live handle; `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn see_volumes(h: *const SeeHandle, out: *mut f64, n: usize) -> SeeStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if n != h.model.n() {
            set_error(&format!("out has length {n}, expected {}", h.model.n()));
            return Err(SeeStatus::InvalidArgument);
        }
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&h.state.volumes);
        Ok(())
    })
}

/// Tip stiffness [N/m] along a direction with the actuator volumes held.
///
/// Returns `LockedDirection` when the volume constraints forbid motion along it.
///
/// # Safety
/// `h` must be a live handle; `direction` holds 3 doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn see_tip_stiffness(h: *const SeeHandle, direction: *const f64, out: *mut f64) -> SeeStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let d = slice(direction, 3, 3, "direction")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let k = h
            .model
            .effective_tip_stiffness(&h.state, &Vec3::new(d[0], d[1], d[2]))
            .map_err(fail)?;
        *out = k;
        Ok(())
    })
}

/// Deflections `F/K` [m] for the axial and transversal design loads.
///
/// # Safety
/// Outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn see_force_deflection(
    k_axial: f64,
    k_transversal: f64,
    normal_force: f64,
    tangential_force: f64,
    axial: *mut f64,
    transversal: *mut f64,
) -> SeeStatus {
    guard(|| {
        if axial.is_null() || transversal.is_null() {
            return Err(null("output"));
        }
        let req = Requirement {
            normal_force,
            tangential_force,
            ..Requirement::default()
        };
        let k = KminEstimate {
            axial: k_axial,
            transversal: k_transversal,
        };
        let fd = force_deflection(&k, &req).map_err(fail)?;
        *axial = fd.axial;
        *transversal = fd.transversal;
        Ok(())
    })
}

/// Series combination `k1·k2/(k1+k2)` [N/m].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn see_serial_stiffness(k1: f64, k2: f64, out: *mut f64) -> SeeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = serial_stiffness(k1, k2).map_err(fail)?;
        Ok(())
    })
}
