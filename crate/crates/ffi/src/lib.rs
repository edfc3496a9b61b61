//! C ABI over the simulated GUI environment, the requirement parser and the
//! evaluation formulas.
//!
//! Every fallible call returns an [`RcStatus`]; on anything but `RC_STATUS_OK`
//! a message is available from [`rc_last_error`] on the same thread. Strings
//! handed out by this library must be released with [`rc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use reqcheck::agentproto::{parse_action, UsageStats};
use reqcheck::evalharness::{prf1, Counts};
use reqcheck::guienv::{load_app, Environment, SimEnvironment};
use reqcheck::orchestrator::{compute_cost, Rates};
use reqcheck::reqmodel::{derive_requirement_state, parse_requirements_structured, Outcome, Verdict};
use rust_decimal::Decimal;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    MalformedRequirements = 4,
    AppLoad = 5,
    ActionParse = 6,
    Environment = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcOutcome {
    Unmet = 0,
    PartiallyMet = 1,
    Met = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RcPrf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// A simulated application plus its runtime state.
pub struct RcEnv {
    env: SimEnvironment,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(RcStatus, String);

type Res<T> = Result<T, Fail>;

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Res<()>) -> RcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(Fail(RcStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail(RcStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    // SAFETY: callers pass either null or a pointer valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| Fail(RcStatus::NullArgument, format!("{what} is null")))
}

fn env_arg<'a>(p: *mut RcEnv) -> Res<&'a mut RcEnv> {
    out_arg(p, "env")
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or NULL. Free with
/// [`rc_string_free`].
#[no_mangle]
pub extern "C" fn rc_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an app definition (JSON) and returns an environment at its initial
/// state.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_env_load(path: *const c_char, out: *mut *mut RcEnv) -> RcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let app = load_app(Path::new(path)).map_err(|e| Fail(RcStatus::AppLoad, format!("{path}: {e}")))?;
        *out = Box::into_raw(Box::new(RcEnv { env: SimEnvironment::new(Arc::new(app)) }));
        Ok(())
    })
}

/// # Safety
/// `env` must be NULL or a handle from [`rc_env_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rc_env_free(env: *mut RcEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle from [`rc_env_load`].
#[no_mangle]
pub unsafe extern "C" fn rc_env_reset(env: *mut RcEnv) -> RcStatus {
    guard(|| {
        env_arg(env)?.env.reset();
        Ok(())
    })
}

/// Executes one action line such as `click(120, 48)` or `type("Tea")`.
/// `warning` may be NULL; otherwise it receives a warning string or NULL.
///
/// # Safety
/// `env` must be a live handle; `action` a NUL-terminated string; `warning`
/// NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_env_execute(env: *mut RcEnv, action: *const c_char, warning: *mut *mut c_char) -> RcStatus {
    guard(|| {
        let env = env_arg(env)?;
        if let Some(w) = warning.as_mut() {
            *w = std::ptr::null_mut();
        }
        let line = str_arg(action, "action")?;
        let action = parse_action(line).map_err(|e| Fail(RcStatus::ActionParse, e.to_string()))?;
        let warned = env.env.execute(&action).map_err(|e| Fail(RcStatus::Environment, e.to_string()))?;
        if let (Some(w), Some(msg)) = (warning.as_mut(), warned) {
            *w = to_c(serde_json::to_value(msg).expect("warning serializes").as_str().unwrap_or_default().to_string());
        }
        Ok(())
    })
}

/// Renders the current screen. Either output may be NULL.
///
/// # Safety
/// `env` must be a live handle; outputs NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_env_observe(env: *mut RcEnv, rendering: *mut *mut c_char, state_hash: *mut u64) -> RcStatus {
    guard(|| {
        let obs = env_arg(env)?.env.observe();
        if let Some(h) = state_hash.as_mut() {
            *h = obs.state_hash;
        }
        if let Some(r) = rendering.as_mut() {
            *r = to_c(obs.rendering);
        }
        Ok(())
    })
}

/// Parses the `REQ:`/`AC:` block format into a JSON array of requirements.
///
/// # Safety
/// `text` must be a NUL-terminated string; `json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_parse_requirements(text: *const c_char, json: *mut *mut c_char) -> RcStatus {
    guard(|| {
        let json = out_arg(json, "json")?;
        *json = std::ptr::null_mut();
        let reqs = parse_requirements_structured(str_arg(text, "text")?)
            .map_err(|e| Fail(RcStatus::MalformedRequirements, e.to_string()))?;
        *json = to_c(serde_json::to_string(&reqs).expect("requirements serialize"));
        Ok(())
    })
}

/// Derives the requirement state from `len` verdicts (non-zero = met).
///
/// # Safety
/// `verdicts` must point to `len` readable bytes; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_derive_state(verdicts: *const u8, len: usize, out: *mut RcOutcome) -> RcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if verdicts.is_null() && len > 0 {
            return Err(Fail(RcStatus::NullArgument, "verdicts is null".into()));
        }
        let raw = if len == 0 { &[][..] } else { std::slice::from_raw_parts(verdicts, len) };
        let vs: Vec<Verdict> = raw.iter().map(|&b| if b != 0 { Verdict::Met } else { Verdict::Unmet }).collect();
        let outcome = derive_requirement_state(&vs).map_err(|e| Fail(RcStatus::InvalidArgument, e.to_string()))?;
        *out = match outcome {
            Outcome::Unmet => RcOutcome::Unmet,
            Outcome::PartiallyMet => RcOutcome::PartiallyMet,
            Outcome::Met => RcOutcome::Met,
        };
        Ok(())
    })
}

/// Cost of a run as a decimal string (four places). Rates are decimal
/// strings in currency per million tokens.
///
/// # Safety
/// Rate arguments must be NUL-terminated strings; `cost` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_compute_cost(
    input_tokens: u64,
    output_tokens: u64,
    input_rate: *const c_char,
    output_rate: *const c_char,
    cost: *mut *mut c_char,
) -> RcStatus {
    guard(|| {
        let cost = out_arg(cost, "cost")?;
        *cost = std::ptr::null_mut();
        let rate = |p, what| -> Res<Decimal> {
            let s = str_arg(p, what)?;
            let d = Decimal::from_str(s.trim()).map_err(|e| Fail(RcStatus::InvalidArgument, format!("{what} '{s}': {e}")))?;
            if d.is_sign_negative() {
                return Err(Fail(RcStatus::InvalidArgument, format!("{what} is negative")));
            }
            Ok(d)
        };
        let rates = Rates::new(rate(input_rate, "input_rate")?, rate(output_rate, "output_rate")?);
        *cost = to_c(compute_cost(UsageStats::new(input_tokens, output_tokens), rates).to_string());
        Ok(())
    })
}

/// Precision, recall and F1 from confusion counts (0/0 counts as 0).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rc_prf1(tp: u64, fp: u64, fn_: u64, out: *mut RcPrf1) -> RcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = prf1(Counts { tp, fp, fn_ });
        *out = RcPrf1 { precision: p.precision, recall: p.recall, f1: p.f1 };
        Ok(())
    })
}
