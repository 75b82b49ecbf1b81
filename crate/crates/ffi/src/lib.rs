//! C interface to the sdqn simulator.
//!
//! Every function returns an [`SdqnStatus`]; results come back through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`sdqn_last_error`]. Panics never cross the boundary: they are reported
//! as `SDQN_STATUS_PANIC` and leave the handle unusable.
//!
//! Actions are encoded as `0` for cooperate and `1` for defect.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Instant;

use sdqn::analysis;
use sdqn::explore::AnnealSchedule;
use sdqn::game::{Action, PayoffParams};
use sdqn::sim::{RunConfig, RunResult, Simulation};
use sdqn::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdqnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The configuration or a parameter value was rejected.
    Config = 3,
    /// A computation produced or received a non-finite number.
    Numeric = 4,
    /// The simulation has no steps left.
    Finished = 5,
    BufferTooSmall = 6,
    /// The handle was poisoned by an earlier panic.
    Poisoned = 7,
    Panic = 8,
    Internal = 9,
}

/// Summary of a finished run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SdqnSummary {
    /// Mean cooperation over the evaluation phase.
    pub coop_mean: f64,
    pub q_mean: f64,
    pub q_gap: f64,
    /// NaN when the sampled activations were all identical.
    pub silhouette: f64,
    pub exploration_strength: f64,
    /// Seconds spent in the steps run by `sdqn_simulation_finish`.
    pub wall_time: f64,
}

enum State {
    Running(Box<Simulation>),
    Finished {
        result: Box<RunResult>,
        actions: Vec<Action>,
        t: u64,
    },
    Poisoned,
}

/// Opaque simulation handle.
pub struct SdqnSimulation {
    state: State,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SdqnStatus, msg: impl Into<String>) -> SdqnStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SdqnStatus {
    let status = match &e {
        Error::Config(_) | Error::Generation(_) => SdqnStatus::Config,
        Error::Dimension { .. }
        | Error::UnknownAgent { .. }
        | Error::Empty(_)
        | Error::Format(_) => SdqnStatus::InvalidArgument,
        Error::NonFinite(_) => SdqnStatus::Numeric,
        _ => SdqnStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into `SDQN_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> SdqnStatus) -> SdqnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SdqnStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn decode_action(v: u8) -> Option<Action> {
    match v {
        0 => Some(Action::Cooperate),
        1 => Some(Action::Defect),
        _ => None,
    }
}

unsafe fn handle<'a>(sim: *mut SdqnSimulation) -> Result<&'a mut SdqnSimulation, SdqnStatus> {
    sim.as_mut()
        .ok_or_else(|| fail(SdqnStatus::NullPointer, "simulation handle is null"))
}

macro_rules! out_ptr {
    ($p:expr) => {
        match $p.as_mut() {
            Some(r) => r,
            None => return fail(SdqnStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdqn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sdqn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Payoff to a player choosing `own` against `other`.
///
/// # Safety
/// `out` must point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn sdqn_payoff(
    d_r: f64,
    d_g: f64,
    own: u8,
    other: u8,
    out: *mut f64,
) -> SdqnStatus {
    guard(|| {
        let out = out_ptr!(out);
        let (Some(a), Some(b)) = (decode_action(own), decode_action(other)) else {
            return fail(SdqnStatus::InvalidArgument, "actions must be 0 or 1");
        };
        match PayoffParams::new(d_r, d_g) {
            Ok(p) => {
                *out = p.payoff(a, b);
                SdqnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Mean temperature over the first half of a linear annealing schedule.
///
/// # Safety
/// `out` must point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn sdqn_exploration_strength(
    tau_init: f64,
    tau_final: f64,
    t_anneal: u64,
    out: *mut f64,
) -> SdqnStatus {
    guard(|| {
        let out = out_ptr!(out);
        match AnnealSchedule::new(tau_init, tau_final, t_anneal)
            .and_then(|s| s.exploration_strength())
        {
            Ok(b) => {
                *out = b;
                SdqnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Mean Euclidean silhouette of `n` row-major points of dimension `dim`.
///
/// # Safety
/// `points` must hold `n * dim` doubles, `labels` must hold `n` entries and
/// `out` must point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn sdqn_silhouette(
    points: *const f64,
    n: usize,
    dim: usize,
    labels: *const usize,
    out: *mut f64,
) -> SdqnStatus {
    guard(|| {
        let out = out_ptr!(out);
        if points.is_null() || labels.is_null() {
            return fail(
                SdqnStatus::NullPointer,
                "points and labels must not be null",
            );
        }
        let Some(len) = n.checked_mul(dim) else {
            return fail(SdqnStatus::InvalidArgument, "n * dim overflows");
        };
        if dim == 0 {
            return fail(SdqnStatus::InvalidArgument, "dim must be positive");
        }
        let flat = std::slice::from_raw_parts(points, len);
        let rows: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let labels = std::slice::from_raw_parts(labels, n);
        match analysis::silhouette(&rows, labels) {
            Ok(s) => {
                *out = s;
                SdqnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Creates a simulation from a TOML table of run fields.
///
/// A null `config_toml` uses the default configuration. Omitted fields take
/// their defaults; unknown fields are rejected.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must point
/// to writable memory for one pointer. Free the handle with
/// [`sdqn_simulation_free`].
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_new(
    config_toml: *const c_char,
    out: *mut *mut SdqnSimulation,
) -> SdqnStatus {
    guard(|| {
        let out = out_ptr!(out);
        *out = ptr::null_mut();
        let cfg = if config_toml.is_null() {
            Ok(RunConfig::default())
        } else {
            match CStr::from_ptr(config_toml).to_str() {
                Ok(text) => RunConfig::from_toml(text),
                Err(_) => return fail(SdqnStatus::InvalidArgument, "config is not valid UTF-8"),
            }
        };
        match cfg.and_then(Simulation::new) {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(SdqnSimulation {
                    state: State::Running(Box::new(sim)),
                }));
                SdqnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`sdqn_simulation_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_free(sim: *mut SdqnSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_n_agents(
    sim: *mut SdqnSimulation,
    out: *mut usize,
) -> SdqnStatus {
    guard(|| {
        let out = out_ptr!(out);
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        *out = match &h.state {
            State::Running(s) => s.config().n_agents(),
            State::Finished { actions, .. } => actions.len(),
            State::Poisoned => return fail(SdqnStatus::Poisoned, "simulation is poisoned"),
        };
        SdqnStatus::Ok
    })
}

/// Steps completed so far.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_t(sim: *mut SdqnSimulation, out: *mut u64) -> SdqnStatus {
    guard(|| {
        let out = out_ptr!(out);
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        *out = match &h.state {
            State::Running(s) => s.t(),
            State::Finished { t, .. } => *t,
            State::Poisoned => return fail(SdqnStatus::Poisoned, "simulation is poisoned"),
        };
        SdqnStatus::Ok
    })
}

/// Advances one step and writes that step's cooperation rate.
///
/// Returns `SDQN_STATUS_FINISHED` once every step has run.
///
/// # Safety
/// `sim` must be a live handle; `coop` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_step(
    sim: *mut SdqnSimulation,
    coop: *mut f64,
) -> SdqnStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let s = match &mut h.state {
            State::Running(s) => s,
            State::Finished { .. } => return fail(SdqnStatus::Finished, "simulation has finished"),
            State::Poisoned => return fail(SdqnStatus::Poisoned, "simulation is poisoned"),
        };
        if s.is_done() {
            return fail(SdqnStatus::Finished, "simulation has finished");
        }
        // A panic inside step leaves the handle poisoned.
        let prev = std::mem::replace(&mut h.state, State::Poisoned);
        let State::Running(mut s) = prev else {
            unreachable!()
        };
        let r = s.step();
        h.state = State::Running(s);
        match r {
            Ok(c) => {
                if let Some(out) = coop.as_mut() {
                    *out = c;
                }
                SdqnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Copies the latest action profile (`0` cooperate, `1` defect).
///
/// # Safety
/// `sim` must be a live handle and `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_actions(
    sim: *mut SdqnSimulation,
    buf: *mut u8,
    len: usize,
) -> SdqnStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let actions = match &h.state {
            State::Running(s) => s.actions(),
            State::Finished { actions, .. } => actions.as_slice(),
            State::Poisoned => return fail(SdqnStatus::Poisoned, "simulation is poisoned"),
        };
        if buf.is_null() {
            return fail(SdqnStatus::NullPointer, "buf is null");
        }
        if len < actions.len() {
            return fail(
                SdqnStatus::BufferTooSmall,
                format!("need {} bytes, got {len}", actions.len()),
            );
        }
        let dst = std::slice::from_raw_parts_mut(buf, actions.len());
        for (d, a) in dst.iter_mut().zip(actions) {
            *d = a.bit();
        }
        SdqnStatus::Ok
    })
}

/// Runs the remaining steps and writes the run summary.
///
/// Calling it again returns the same summary.
///
/// # Safety
/// `sim` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_finish(
    sim: *mut SdqnSimulation,
    out: *mut SdqnSummary,
) -> SdqnStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if let State::Running(_) = h.state {
            let State::Running(s) = std::mem::replace(&mut h.state, State::Poisoned) else {
                unreachable!()
            };
            let t = s.config().total_steps();
            let start = Instant::now();
            let mut s = s;
            while !s.is_done() {
                if let Err(e) = s.step() {
                    h.state = State::Running(s);
                    return from_error(e);
                }
            }
            let actions = s.actions().to_vec();
            match (*s).run_to_end() {
                Ok(mut result) => {
                    result.wall_time = start.elapsed().as_secs_f64();
                    h.state = State::Finished {
                        result: Box::new(result),
                        actions,
                        t,
                    };
                }
                Err(e) => return from_error(e),
            }
        }
        match &h.state {
            State::Finished { result, .. } => {
                if let Some(out) = out.as_mut() {
                    *out = SdqnSummary {
                        coop_mean: result.coop_mean,
                        q_mean: result.q_mean,
                        q_gap: result.q_gap,
                        silhouette: result.silhouette().unwrap_or(f64::NAN),
                        exploration_strength: result.exploration_strength,
                        wall_time: result.wall_time,
                    };
                }
                SdqnStatus::Ok
            }
            _ => fail(SdqnStatus::Poisoned, "simulation is poisoned"),
        }
    })
}

/// Copies the per-step cooperation rates recorded so far.
///
/// With a null `buf` only `written` is set, to the number of entries
/// available.
///
/// # Safety
/// `sim` must be a live handle, `buf` null or holding `len` doubles, and
/// `written` writable.
#[no_mangle]
pub unsafe extern "C" fn sdqn_simulation_trace(
    sim: *mut SdqnSimulation,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> SdqnStatus {
    guard(|| {
        let written = out_ptr!(written);
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let trace = match &h.state {
            State::Running(s) => s.coop_trace(),
            State::Finished { result, .. } => result.coop_trace.as_slice(),
            State::Poisoned => return fail(SdqnStatus::Poisoned, "simulation is poisoned"),
        };
        *written = trace.len();
        if buf.is_null() {
            return SdqnStatus::Ok;
        }
        if len < trace.len() {
            return fail(
                SdqnStatus::BufferTooSmall,
                format!("need {} entries, got {len}", trace.len()),
            );
        }
        std::slice::from_raw_parts_mut(buf, trace.len()).copy_from_slice(trace);
        SdqnStatus::Ok
    })
}
