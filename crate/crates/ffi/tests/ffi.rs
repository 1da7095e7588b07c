use std::ffi::{CStr, CString};
use std::ptr;

use trajalign_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ta_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

const DOC: &str = r#"{"steps": [
    {"index": 0, "calls": [{"tool": "search/web", "arguments": {"q": "paris"}}]},
    {"index": 1, "calls": [{"tool": "weather/forecast", "arguments": {"city": "Paris"}}]}
]}"#;

#[test]
fn hungarian_square_and_rectangular() {
    let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
    let mut cols = [0isize; 3];
    let mut total = 0.0;
    let st = unsafe { ta_hungarian(cost.as_ptr(), 3, 3, cols.as_mut_ptr(), &mut total) };
    assert_eq!(st, TaStatus::Ok);
    assert_eq!((cols, total), ([1, 0, 2], 5.0));

    let tall = [1.0, 9.0, 2.0, 0.5, 3.0, 3.0];
    let mut cols = [0isize; 3];
    let st = unsafe { ta_hungarian(tall.as_ptr(), 3, 2, cols.as_mut_ptr(), &mut total) };
    assert_eq!(st, TaStatus::Ok);
    assert_eq!(cols, [0, 1, -1]);
    assert_eq!(total, 1.5);

    let bad = [f64::NAN];
    let st = unsafe { ta_hungarian(bad.as_ptr(), 1, 1, cols.as_mut_ptr(), &mut total) };
    assert_eq!(st, TaStatus::Shape);
}

#[test]
fn scalar_helpers_and_errors() {
    let mut out = 0.0;
    let st = unsafe { ta_trimmed_mean([0.0, 1.0, 0.3, 0.7].as_ptr(), 4, &mut out) };
    assert_eq!((st, out), (TaStatus::Ok, 0.5));
    let st = unsafe { ta_trimmed_mean([0.1].as_ptr(), 1, &mut out) };
    assert_eq!(st, TaStatus::Arity);
    assert!(last_error().starts_with("ArityError"));

    let text = c(r"text \boxed{3} more \boxed{8}");
    let st = unsafe { ta_parse_boxed_score(text.as_ptr(), TaScale::TenToUnit, &mut out) };
    assert_eq!((st, out), (TaStatus::Ok, 0.8));
    let none = c("no verdict");
    let st = unsafe { ta_parse_boxed_score(none.as_ptr(), TaScale::Unit, &mut out) };
    assert_eq!(st, TaStatus::NoScore);
    let st = unsafe { ta_parse_boxed_score(ptr::null(), TaScale::Unit, &mut out) };
    assert_eq!(st, TaStatus::NullArgument);
}

#[test]
fn score_round_trip() {
    let doc = c(DOC);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ta_trajectory_parse(doc.as_ptr(), &mut t) }, TaStatus::Ok);
    assert_eq!(unsafe { ta_trajectory_num_calls(t) }, 2);
    assert_eq!(unsafe { ta_trajectory_num_steps(t) }, 2);

    let cfg = c("tau_weak = 0.5\n");
    let mut scorer = ptr::null_mut();
    assert_eq!(unsafe { ta_scorer_new(cfg.as_ptr(), &mut scorer) }, TaStatus::Ok);
    let id = c("sample-1");
    let mut json = ptr::null_mut();
    let st = unsafe { ta_scorer_score(scorer, id.as_ptr(), t, t, &mut json) };
    assert_eq!(st, TaStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert_eq!(report["sample_id"], "sample-1");
    assert_eq!(report["step_coh"], 1.0);
    unsafe {
        ta_string_free(json);
        ta_scorer_free(scorer);
        ta_trajectory_free(t);
    }
}

#[test]
fn parse_and_config_failures() {
    let bad = c(r#"{"steps": [{"index": 0, "calls": []}]}"#);
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { ta_trajectory_parse(bad.as_ptr(), &mut t) },
        TaStatus::Invariant
    );
    assert!(t.is_null());
    let broken = c("{");
    assert_eq!(
        unsafe { ta_trajectory_parse(broken.as_ptr(), &mut t) },
        TaStatus::Schema
    );

    let cfg = c("tau_weak = 0.95\n");
    let mut scorer = ptr::null_mut();
    assert_eq!(unsafe { ta_scorer_new(cfg.as_ptr(), &mut scorer) }, TaStatus::Config);
    assert!(last_error().starts_with("ConfigError"));

    unsafe {
        ta_trajectory_free(ptr::null_mut());
        ta_scorer_free(ptr::null_mut());
        ta_registry_free(ptr::null_mut());
        ta_string_free(ptr::null_mut());
    }
}

#[test]
fn classify_through_registry() {
    let reg_json = c(r#"["search/web"]"#);
    let mut reg = ptr::null_mut();
    assert_eq!(unsafe { ta_registry_parse(reg_json.as_ptr(), &mut reg) }, TaStatus::Ok);
    let cases = [
        (r#"{"name": "search/web"}"#, -1, None, TaOutcome::IllegalFormat),
        (
            r#"{"name": "ocr/perform", "arguments": {}}"#,
            -1,
            None,
            TaOutcome::UnknownTool,
        ),
        (
            r#"{"name": "search/web", "arguments": {}}"#,
            200,
            Some("Invalid argument q"),
            TaOutcome::InvalidArguments,
        ),
        (
            r#"{"name": "search/web", "arguments": {}}"#,
            404,
            None,
            TaOutcome::SuccessResourceNotFound,
        ),
        (
            r#"{"name": "search/web", "arguments": {}}"#,
            200,
            None,
            TaOutcome::Success,
        ),
    ];
    for (raw, status, error, want) in cases {
        let raw = c(raw);
        let error = error.map(c);
        let mut out = TaOutcome::Success;
        let st = unsafe {
            ta_classify_call(
                reg,
                raw.as_ptr(),
                status,
                error.as_ref().map_or(ptr::null(), |e| e.as_ptr()),
                &mut out,
            )
        };
        assert_eq!(st, TaStatus::Ok);
        assert_eq!(out, want);
    }
    unsafe { ta_registry_free(reg) };
}
