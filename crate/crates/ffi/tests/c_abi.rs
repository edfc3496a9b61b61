use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use reqcheck_ffi::*;

fn fixture(rel: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel);
    CString::new(p.to_str().unwrap()).unwrap()
}

/// Copies and frees a library-owned string.
fn take(s: *mut c_char) -> Option<String> {
    if s.is_null() {
        return None;
    }
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { rc_string_free(s) };
    Some(out)
}

fn last_error() -> Option<String> {
    take(rc_last_error())
}

fn observe(env: *mut RcEnv) -> (String, u64) {
    let (mut text, mut hash) = (ptr::null_mut(), 0u64);
    assert_eq!(unsafe { rc_env_observe(env, &mut text, &mut hash) }, RcStatus::Ok);
    (take(text).unwrap(), hash)
}

fn exec(env: *mut RcEnv, line: &str) -> (RcStatus, Option<String>) {
    let line = CString::new(line).unwrap();
    let mut warning = ptr::null_mut();
    let status = unsafe { rc_env_execute(env, line.as_ptr(), &mut warning) };
    (status, take(warning))
}

#[test]
fn environment_handle_lifecycle() {
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { rc_env_load(fixture("budget/app.json").as_ptr(), &mut env) }, RcStatus::Ok);
    assert!(!env.is_null());
    let (home, fresh) = observe(env);
    assert!(home.contains("add_nav"));
    assert_eq!(format!("{fresh:016x}"), "37091da5d3d57336");

    assert_eq!(exec(env, "click(100, 110)"), (RcStatus::Ok, None));
    let (add, moved) = observe(env);
    assert_ne!(moved, fresh);
    assert!(add.contains("desc"));

    // Typing with nothing focused is allowed but flagged.
    assert_eq!(exec(env, r#"type("Tea")"#), (RcStatus::Ok, Some("type_without_focus".into())));
    assert_eq!(exec(env, "tap(1, 2)").0, RcStatus::ActionParse);
    assert!(last_error().is_some());
    assert_eq!(exec(env, "click(5000, 5000)").0, RcStatus::Environment);
    assert!(last_error().unwrap().contains("5000"));

    assert_eq!(unsafe { rc_env_reset(env) }, RcStatus::Ok);
    assert_eq!(observe(env), (home, fresh));
    // Success clears the previous error.
    assert!(last_error().is_none());
    unsafe { rc_env_free(env) };
    unsafe { rc_env_free(ptr::null_mut()) };
}

#[test]
fn load_errors() {
    let mut env = ptr::null_mut();
    let missing = CString::new("/no/such/app.json").unwrap();
    assert_eq!(unsafe { rc_env_load(missing.as_ptr(), &mut env) }, RcStatus::AppLoad);
    assert!(env.is_null());
    assert!(last_error().unwrap().contains("/no/such/app.json"));
    assert_eq!(unsafe { rc_env_load(ptr::null(), &mut env) }, RcStatus::NullArgument);
    assert_eq!(unsafe { rc_env_load(missing.as_ptr(), ptr::null_mut()) }, RcStatus::NullArgument);
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { rc_env_load(bad.as_ptr().cast(), &mut env) }, RcStatus::InvalidUtf8);
    assert_eq!(unsafe { rc_env_reset(ptr::null_mut()) }, RcStatus::NullArgument);
}

#[test]
fn requirement_parsing() {
    let text = CString::new("REQ: Add expense\nAC: Button visible\nAC: Row appended\nDATA: amount=12.50").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { rc_parse_requirements(text.as_ptr(), &mut json) }, RcStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(json).unwrap()).unwrap();
    assert_eq!(v[0]["id"], "req-1");
    assert_eq!(v[0]["criteria"].as_array().unwrap().len(), 2);
    assert_eq!(v[0]["test_data"][0]["value"], "12.50");

    let orphan = CString::new("AC: orphan line").unwrap();
    assert_eq!(unsafe { rc_parse_requirements(orphan.as_ptr(), &mut json) }, RcStatus::MalformedRequirements);
    assert!(json.is_null());
    assert!(last_error().unwrap().contains("line 1"));
}

#[test]
fn state_cost_and_scores() {
    let mut out = RcOutcome::Unmet;
    for (vs, want) in [(&[1u8, 1, 1][..], RcOutcome::Met), (&[0, 0], RcOutcome::Unmet), (&[1, 0, 1], RcOutcome::PartiallyMet)] {
        assert_eq!(unsafe { rc_derive_state(vs.as_ptr(), vs.len(), &mut out) }, RcStatus::Ok);
        assert_eq!(out, want);
    }
    assert_eq!(unsafe { rc_derive_state(ptr::null(), 0, &mut out) }, RcStatus::InvalidArgument);

    let (three, zero, twelve) = (CString::new("3").unwrap(), CString::new("0").unwrap(), CString::new("12").unwrap());
    let mut cost = ptr::null_mut();
    assert_eq!(unsafe { rc_compute_cost(189_700, 1_984, three.as_ptr(), zero.as_ptr(), &mut cost) }, RcStatus::Ok);
    assert_eq!(take(cost).unwrap(), "0.5691");
    assert_eq!(unsafe { rc_compute_cost(229_800, 2_394, three.as_ptr(), twelve.as_ptr(), &mut cost) }, RcStatus::Ok);
    assert_eq!(take(cost).unwrap(), "0.7181");
    let neg = CString::new("-1").unwrap();
    assert_eq!(unsafe { rc_compute_cost(1, 1, neg.as_ptr(), zero.as_ptr(), &mut cost) }, RcStatus::InvalidArgument);
    let junk = CString::new("three").unwrap();
    assert_eq!(unsafe { rc_compute_cost(1, 1, junk.as_ptr(), zero.as_ptr(), &mut cost) }, RcStatus::InvalidArgument);

    let mut s = RcPrf1::default();
    assert_eq!(unsafe { rc_prf1(17, 0, 1, &mut s) }, RcStatus::Ok);
    assert!((s.f1 - 0.971).abs() < 0.001);
    assert_eq!(unsafe { rc_prf1(0, 0, 0, &mut s) }, RcStatus::Ok);
    assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    assert_eq!(unsafe { rc_prf1(1, 1, 1, ptr::null_mut()) }, RcStatus::NullArgument);
}

#[test]
fn header_is_current_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/reqcheck.h")).unwrap();
    for name in ["rc_env_load", "rc_env_execute", "rc_env_observe", "rc_string_free", "rc_last_error", "RC_STATUS_PANIC"] {
        assert!(header.contains(name), "header lacks {name}");
    }
    // Syntax-check as C when a compiler is around.
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(dir.join("include/reqcheck.h"))
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
