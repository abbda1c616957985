//! C ABI over the solver library: opaque handles, integer status codes, and
//! a thread-local last-error message. `build.rs` regenerates the matching
//! header at `include/hmdp.h`.
//!
//! Conventions:
//! - Constructors write a handle through an out-pointer and return a status;
//!   `Ok` means the out-pointer now owns the handle and must release it with
//!   the matching `_free` exactly once. On any other status nothing is
//!   written.
//! - Accessors borrow their handle and never take ownership.
//! - Every non-`Ok` status leaves a message readable through
//!   [`hmdp_last_error_message`]; the pointer stays valid until the next
//!   call on the same thread.
//! - No call unwinds across the boundary: panics are caught and reported as
//!   [`HmdpStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;

use hmdp::dp_markov::{
    greedy_policy_from_q, q_value_iteration, InfoSpace, MixingWeights, Policy, QTable,
};
use hmdp::dp_nonmarkov::{estimate_lipschitz, suboptimality_bound, LipschitzMode};
use hmdp::info::InfoState;
use hmdp::model::{validate_model, MdpModel, ModelConfig};
use hmdp::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmdpStatus {
    /// Success; out-parameters are written.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The model text, file, or a derived quantity was rejected.
    Config = 3,
    /// The solver hit its sweep budget before reaching the tolerance.
    NonConverged = 4,
    /// An argument was out of range or inconsistent with the handle.
    InvalidArgument = 5,
    /// A panic was caught at the boundary; state may be incomplete.
    Internal = 6,
}

/// How the hidden mode is weighted per window during backups.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmdpMixing {
    /// Equal weight on every mode.
    Uniform = 0,
    /// Stationary distribution of the (constant) chain.
    Stationary = 1,
    /// Open-loop belief composed along each window from the model's
    /// initial mode distribution.
    Composed = 2,
}

/// Opaque: a validated decision-process model.
pub struct HmdpModel {
    inner: MdpModel,
}

/// Opaque: a converged window-table solution and its greedy policy.
pub struct HmdpSolution {
    q: QTable,
    policy: Policy,
    iterations: usize,
    final_residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(text).expect("NUL-free error text"));
    });
}

fn status_for(err: &Error) -> HmdpStatus {
    match err {
        Error::NonConverged { .. } => HmdpStatus::NonConverged,
        Error::Config(_) | Error::Io(_) | Error::Toml(_) | Error::Json(_) => HmdpStatus::Config,
        _ => HmdpStatus::InvalidArgument,
    }
}

fn fail(err: &Error) -> HmdpStatus {
    set_error(err);
    status_for(err)
}

/// Runs a body that may panic; panics become `Internal`.
fn guarded(body: impl FnOnce() -> HmdpStatus) -> HmdpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic at the C boundary");
            HmdpStatus::Internal
        }
    }
}

/// # Safety
/// `text` must be a NUL-terminated string; returns None (and sets the
/// error) when it is null or not UTF-8.
unsafe fn read_str<'a>(text: *const c_char, what: &str) -> Option<&'a str> {
    if text.is_null() {
        set_error(format!("{what} is null"));
        return None;
    }
    match CStr::from_ptr(text).to_str() {
        Ok(s) => Some(s),
        Err(_) => {
            set_error(format!("{what} is not valid UTF-8"));
            None
        }
    }
}

/// Version of the underlying library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hmdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer is invalidated by the next failing call on the thread.
#[no_mangle]
pub extern "C" fn hmdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

fn build_model(text: &str, out: *mut *mut HmdpModel) -> HmdpStatus {
    let model = match ModelConfig::from_toml_str(text).and_then(|c| c.build()) {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    let violations = validate_model(&model);
    if let Some(v) = violations.first() {
        set_error(format!(
            "model fails validation ({} violation(s)); first: {v}",
            violations.len()
        ));
        return HmdpStatus::Config;
    }
    unsafe {
        *out = Box::into_raw(Box::new(HmdpModel { inner: model }));
    }
    HmdpStatus::Ok
}

/// Parses, builds, and validates a model from TOML text.
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid pointer; on `Ok` the
/// caller owns the handle and frees it with [`hmdp_model_free`].
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_from_toml(
    text: *const c_char,
    out: *mut *mut HmdpModel,
) -> HmdpStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        let Some(text) = read_str(text, "model text") else {
            return if text.is_null() {
                HmdpStatus::NullArgument
            } else {
                HmdpStatus::InvalidUtf8
            };
        };
        build_model(text, out)
    })
}

/// Reads a TOML file and builds a model from it.
///
/// # Safety
/// Same contract as [`hmdp_model_from_toml`], with `path` naming a
/// readable file.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_from_file(
    path: *const c_char,
    out: *mut *mut HmdpModel,
) -> HmdpStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        let Some(path) = read_str(path, "model path") else {
            return if path.is_null() {
                HmdpStatus::NullArgument
            } else {
                HmdpStatus::InvalidUtf8
            };
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                set_error(format!("{path}: {e}"));
                return HmdpStatus::Config;
            }
        };
        build_model(&text, out)
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from a model constructor, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_free(model: *mut HmdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Grid size of the model; 0 when the handle is null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_num_points(model: *const HmdpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_points())
}

/// Number of hidden modes; 0 when the handle is null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_num_modes(model: *const HmdpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_modes)
}

/// Number of actions; 0 when the handle is null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_num_actions(model: *const HmdpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_actions())
}

/// Discount factor; NaN when the handle is null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_gamma(model: *const HmdpModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.inner.gamma)
}

/// Writes the model's SHA-256 content hash as 64 hex characters plus NUL.
/// `len` must be at least 65.
///
/// # Safety
/// `model` must be a live handle; `buffer` must point to `len` writable
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn hmdp_model_content_hash(
    model: *const HmdpModel,
    buffer: *mut c_char,
    len: usize,
) -> HmdpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model handle is null");
            return HmdpStatus::NullArgument;
        };
        if buffer.is_null() {
            set_error("hash buffer is null");
            return HmdpStatus::NullArgument;
        }
        let hash = model.inner.content_hash();
        if len < hash.len() + 1 {
            set_error(format!("hash buffer holds {len} bytes; need {}", hash.len() + 1));
            return HmdpStatus::InvalidArgument;
        }
        ptr::copy_nonoverlapping(hash.as_ptr() as *const c_char, buffer, hash.len());
        *buffer.add(hash.len()) = 0;
        HmdpStatus::Ok
    })
}

/// Index of a window given its points, newest first; the window length
/// must be `memory + 1` and every entry below the grid size.
///
/// # Safety
/// `model` must be a live handle; `window` must point to `window_len`
/// readable entries; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_window_index(
    model: *const HmdpModel,
    memory: usize,
    window: *const usize,
    window_len: usize,
    out: *mut usize,
) -> HmdpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model handle is null");
            return HmdpStatus::NullArgument;
        };
        if window.is_null() || out.is_null() {
            set_error("window or out pointer is null");
            return HmdpStatus::NullArgument;
        }
        if window_len != memory + 1 {
            set_error(format!("window has {window_len} entries; memory {memory} needs {}", memory + 1));
            return HmdpStatus::InvalidArgument;
        }
        let entries = std::slice::from_raw_parts(window, window_len).to_vec();
        let space = match InfoSpace::new(model.inner.num_points(), memory) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        let info = match InfoState::new(entries, model.inner.num_points()) {
            Ok(i) => i,
            Err(e) => return fail(&e),
        };
        match space.index_of(&info) {
            Ok(index) => {
                *out = index;
                HmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Solves the window Q fixed point and keeps the greedy policy.
/// Fails with `NonConverged` when `max_sweeps` is insufficient; no handle
/// is produced in that case.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer; on `Ok` the
/// caller owns the handle and frees it with [`hmdp_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn hmdp_solve(
    model: *const HmdpModel,
    memory: usize,
    mixing: HmdpMixing,
    tol: f64,
    max_sweeps: usize,
    out: *mut *mut HmdpSolution,
) -> HmdpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model handle is null");
            return HmdpStatus::NullArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        let m = &model.inner;
        let space = match InfoSpace::new(m.num_points(), memory) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        let weights = match mixing {
            HmdpMixing::Uniform => MixingWeights::uniform(space, m.num_modes),
            HmdpMixing::Stationary => MixingWeights::stationary(space, &m.chain),
            HmdpMixing::Composed => MixingWeights::composed(space, &m.chain, &m.initial_s),
        };
        let weights = match weights {
            Ok(w) => w,
            Err(e) => return fail(&e),
        };
        let sol = match q_value_iteration(m, &weights, tol, max_sweeps) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        if !sol.trace.converged {
            let err = Error::NonConverged {
                iterations: sol.trace.residuals.len(),
                residual: sol.trace.residuals.last().copied().unwrap_or(f64::NAN),
            };
            return fail(&err);
        }
        let policy = greedy_policy_from_q(&sol.q);
        *out = Box::into_raw(Box::new(HmdpSolution {
            iterations: sol.trace.residuals.len(),
            final_residual: sol.trace.residuals.last().copied().unwrap_or(0.0),
            policy,
            q: sol.q,
        }));
        HmdpStatus::Ok
    })
}

/// Releases a solution handle. Null is a no-op.
///
/// # Safety
/// `solution` must be a handle from [`hmdp_solve`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_free(solution: *mut HmdpSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of windows in the solution table; 0 when the handle is null.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_num_windows(solution: *const HmdpSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.q.space().count())
}

/// Number of actions in the solution table; 0 when the handle is null.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_num_actions(solution: *const HmdpSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.q.num_actions())
}

/// Sweeps the solver ran; 0 when the handle is null.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_iterations(solution: *const HmdpSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.iterations)
}

/// Final fixed-point residual; NaN when the handle is null.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_final_residual(solution: *const HmdpSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.final_residual)
}

/// One action value of the solution.
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_q_value(
    solution: *const HmdpSolution,
    window: usize,
    action: usize,
    out: *mut f64,
) -> HmdpStatus {
    guarded(|| {
        let Some(sol) = solution.as_ref() else {
            set_error("solution handle is null");
            return HmdpStatus::NullArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        if window >= sol.q.space().count() || action >= sol.q.num_actions() {
            set_error(format!(
                "entry ({window}, {action}) outside table ({} windows, {} actions)",
                sol.q.space().count(),
                sol.q.num_actions()
            ));
            return HmdpStatus::InvalidArgument;
        }
        *out = sol.q.get(window, action);
        HmdpStatus::Ok
    })
}

/// Best (minimal) value at a window.
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_value(
    solution: *const HmdpSolution,
    window: usize,
    out: *mut f64,
) -> HmdpStatus {
    guarded(|| {
        let Some(sol) = solution.as_ref() else {
            set_error("solution handle is null");
            return HmdpStatus::NullArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        if window >= sol.q.space().count() {
            set_error(format!(
                "window {window} outside table ({} windows)",
                sol.q.space().count()
            ));
            return HmdpStatus::InvalidArgument;
        }
        *out = sol
            .q
            .row(window)
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        HmdpStatus::Ok
    })
}

/// Greedy action at a window (ties go to the lowest action index).
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_greedy_action(
    solution: *const HmdpSolution,
    window: usize,
    out: *mut usize,
) -> HmdpStatus {
    guarded(|| {
        let Some(sol) = solution.as_ref() else {
            set_error("solution handle is null");
            return HmdpStatus::NullArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        if window >= sol.q.space().count() {
            set_error(format!(
                "window {window} outside table ({} windows)",
                sol.q.space().count()
            ));
            return HmdpStatus::InvalidArgument;
        }
        *out = sol.policy.action(window);
        HmdpStatus::Ok
    })
}

/// Copies the full action-value table, action index fastest. `len` must be
/// exactly windows x actions.
///
/// # Safety
/// `solution` must be a live handle; `buffer` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn hmdp_solution_copy_q(
    solution: *const HmdpSolution,
    buffer: *mut f64,
    len: usize,
) -> HmdpStatus {
    guarded(|| {
        let Some(sol) = solution.as_ref() else {
            set_error("solution handle is null");
            return HmdpStatus::NullArgument;
        };
        if buffer.is_null() {
            set_error("value buffer is null");
            return HmdpStatus::NullArgument;
        }
        let values = sol.q.values();
        if len != values.len() {
            set_error(format!("buffer holds {len} doubles; table has {}", values.len()));
            return HmdpStatus::InvalidArgument;
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
        HmdpStatus::Ok
    })
}

/// Exact window-mixing Lipschitz constant for the given memory. Subject to
/// the enumeration feasibility gates; oversized requests fail with
/// `InvalidArgument`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_lipschitz_exact(
    model: *const HmdpModel,
    memory: usize,
    out: *mut f64,
) -> HmdpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model handle is null");
            return HmdpStatus::NullArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        match estimate_lipschitz(&model.inner, memory, LipschitzMode::Exact) {
            Ok(est) => {
                *out = est.value;
                HmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Sampled lower estimate of the window-mixing Lipschitz constant over
/// `windows` sampled windows.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_lipschitz_sampled(
    model: *const HmdpModel,
    memory: usize,
    windows: usize,
    seed: u64,
    out: *mut f64,
) -> HmdpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model handle is null");
            return HmdpStatus::NullArgument;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        match estimate_lipschitz(
            &model.inner,
            memory,
            LipschitzMode::Sampled { windows, seed },
        ) {
            Ok(est) => {
                *out = est.value;
                HmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Worst-case value gap of a window policy after `sweeps` fixed-belief
/// sweeps; negative `sweeps` gives the infinite-sweep limit.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmdp_suboptimality_bound(
    reward_bound: f64,
    gamma: f64,
    num_modes: usize,
    lipschitz: f64,
    sweeps: i64,
    out: *mut f64,
) -> HmdpStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return HmdpStatus::NullArgument;
        }
        let k = if sweeps < 0 { None } else { Some(sweeps as u64) };
        match suboptimality_bound(reward_bound, gamma, num_modes, lipschitz, k) {
            Ok(v) => {
                *out = v;
                HmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
