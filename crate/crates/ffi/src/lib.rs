//! C ABI over the trajalign engine.
//!
//! Objects cross the boundary as opaque handles created by `ta_*_new` /
//! `ta_*_parse` and released with the matching `ta_*_free`. Every fallible call
//! returns a [`TaStatus`]; on failure [`ta_last_error_message`] describes the
//! error for the calling thread. Strings returned by the library are owned by
//! the caller and must be released with [`ta_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trajalign::judge::Scale;
use trajalign::outcome::{classify_call, CallLogEntry, Outcome, Registry};
use trajalign::{Error, RunConfig, Scorer, Trajectory};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Invariant = 4,
    Config = 5,
    Arity = 6,
    NoScore = 7,
    Shape = 8,
    Encoder = 9,
    EmptyReference = 10,
    Io = 11,
    Other = 12,
    Panic = 13,
}

/// Replay outcome of one tool call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaOutcome {
    IllegalFormat = 0,
    UnknownTool = 1,
    InvalidArguments = 2,
    SuccessResourceNotFound = 3,
    Success = 4,
}

/// Verdict scale for [`ta_parse_boxed_score`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaScale {
    /// 0–10 rubric, divided by 10.
    TenToUnit = 0,
    Unit = 1,
}

/// Parsed trajectory.
pub struct TaTrajectory(Trajectory);

/// Configured scorer with its encoder.
pub struct TaScorer(Scorer);

/// Tool registry for outcome classification.
pub struct TaRegistry(Registry);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', "\\0")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> TaStatus {
    match e.code() {
        "SchemaError" => TaStatus::Schema,
        "InvariantError" | "IndexError" | "DepthError" | "NonSerializableError" => TaStatus::Invariant,
        "ConfigError" => TaStatus::Config,
        "ArityError" => TaStatus::Arity,
        "NoScoreError" => TaStatus::NoScore,
        "ShapeError" | "DimMismatchError" => TaStatus::Shape,
        "EncoderError" | "NonFiniteError" | "ZeroNormError" => TaStatus::Encoder,
        "EmptyReferenceError" => TaStatus::EmptyReference,
        "IoError" => TaStatus::Io,
        _ => TaStatus::Other,
    }
}

/// Runs `f`, recording any error or panic for [`ta_last_error_message`].
fn guard(f: impl FnOnce() -> Result<(), (TaStatus, String)>) -> TaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TaStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TaStatus, String) {
    (status_of(&e), format!("{}: {e}", e.code()))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TaStatus, String)> {
    if p.is_null() {
        return Err((TaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), (TaStatus, String)> {
    if p.is_null() {
        Err((TaStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "\\0"))
        .expect("interior NULs replaced")
        .into_raw()
}

/// Message for the most recent failure on this thread, or NULL. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ta_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ta_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a trajectory JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ta_trajectory_parse(json: *const c_char, out: *mut *mut TaTrajectory) -> TaStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(json, "json")?;
        let t = Trajectory::from_json_str(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TaTrajectory(t)));
        Ok(())
    })
}

/// Number of calls in the trajectory, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ta_trajectory_num_calls(t: *const TaTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.num_calls())
}

/// Number of steps in the trajectory, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ta_trajectory_num_steps(t: *const TaTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.num_steps())
}

/// # Safety
/// `t` must be NULL or a handle from [`ta_trajectory_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ta_trajectory_free(t: *mut TaTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Creates a scorer. `config_toml` may be NULL for defaults.
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ta_scorer_new(config_toml: *const c_char, out: *mut *mut TaScorer) -> TaStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_toml_str(read_str(config_toml, "config_toml")?).map_err(lib_err)?
        };
        let scorer = Scorer::new(cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TaScorer(scorer)));
        Ok(())
    })
}

/// Scores `pred` against `reference` and writes the sample report as JSON to
/// `out_json`. Free the result with [`ta_string_free`].
///
/// # Safety
/// All handles must be live; `sample_id` must be NUL-terminated; `out_json`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ta_scorer_score(
    scorer: *const TaScorer,
    sample_id: *const c_char,
    reference: *const TaTrajectory,
    pred: *const TaTrajectory,
    out_json: *mut *mut c_char,
) -> TaStatus {
    guard(|| {
        non_null(scorer, "scorer")?;
        non_null(reference, "reference")?;
        non_null(pred, "pred")?;
        non_null(out_json, "out_json")?;
        let id = read_str(sample_id, "sample_id")?;
        let report = (*scorer).0.score(id, &(*reference).0, &(*pred).0).map_err(lib_err)?;
        let text = serde_json::to_string(&report).map_err(|e| (TaStatus::Other, e.to_string()))?;
        *out_json = into_c_string(text);
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from [`ta_scorer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ta_scorer_free(s: *mut TaScorer) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Parses a registry JSON document.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ta_registry_parse(json: *const c_char, out: *mut *mut TaRegistry) -> TaStatus {
    guard(|| {
        non_null(out, "out")?;
        let r = Registry::from_json_str(read_str(json, "json")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TaRegistry(r)));
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a handle from [`ta_registry_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ta_registry_free(r: *mut TaRegistry) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Classifies one replayed call. `status` < 0 means no transport status;
/// `error_text` may be NULL.
///
/// # Safety
/// `registry` must be live; strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ta_classify_call(
    registry: *const TaRegistry,
    raw_request: *const c_char,
    status: i32,
    error_text: *const c_char,
    out: *mut TaOutcome,
) -> TaStatus {
    guard(|| {
        non_null(registry, "registry")?;
        non_null(out, "out")?;
        let raw = read_str(raw_request, "raw_request")?;
        let error = if error_text.is_null() {
            None
        } else {
            Some(read_str(error_text, "error_text")?.to_string())
        };
        let status = u16::try_from(status).ok();
        let entry = CallLogEntry::new(raw, status, error);
        *out = match classify_call(&entry, &(*registry).0) {
            Outcome::IllegalFormat => TaOutcome::IllegalFormat,
            Outcome::UnknownTool => TaOutcome::UnknownTool,
            Outcome::InvalidArguments => TaOutcome::InvalidArguments,
            Outcome::SuccessResourceNotFound => TaOutcome::SuccessResourceNotFound,
            Outcome::Success => TaOutcome::Success,
        };
        Ok(())
    })
}

/// Minimum-cost assignment of a row-major `rows × cols` matrix. Writes the
/// assigned column of each row to `out_cols` (length `rows`, -1 when the row
/// is unassigned) and the total to `out_cost`.
///
/// # Safety
/// `cost` must hold `rows * cols` doubles; `out_cols` must hold `rows` slots.
#[no_mangle]
pub unsafe extern "C" fn ta_hungarian(
    cost: *const f64,
    rows: usize,
    cols: usize,
    out_cols: *mut isize,
    out_cost: *mut f64,
) -> TaStatus {
    guard(|| {
        non_null(out_cost, "out_cost")?;
        if rows == 0 || cols == 0 {
            *out_cost = 0.0;
            return Ok(());
        }
        non_null(cost, "cost")?;
        non_null(out_cols, "out_cols")?;
        let len = rows
            .checked_mul(cols)
            .ok_or((TaStatus::Shape, "matrix size overflows".to_string()))?;
        let flat = std::slice::from_raw_parts(cost, len);
        if let Some(i) = flat.iter().position(|c| !c.is_finite()) {
            return Err((TaStatus::Shape, format!("non-finite cost at index {i}")));
        }
        let matrix: Vec<Vec<f64>> = flat.chunks(cols).map(<[f64]>::to_vec).collect();
        let a = trajalign::hungarian(&matrix);
        let out = std::slice::from_raw_parts_mut(out_cols, rows);
        out.fill(-1);
        for (r, c) in a.pairs {
            out[r] = c as isize;
        }
        *out_cost = a.cost;
        Ok(())
    })
}

/// Four-judge trimmed mean.
///
/// # Safety
/// `scores` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ta_trimmed_mean(scores: *const f64, len: usize, out: *mut f64) -> TaStatus {
    guard(|| {
        non_null(out, "out")?;
        let slice = if len == 0 {
            &[][..]
        } else {
            non_null(scores, "scores")?;
            std::slice::from_raw_parts(scores, len)
        };
        *out = trajalign::trimmed_mean(slice).map_err(lib_err)?;
        Ok(())
    })
}

/// Score from the last `\boxed{...}` in `response`, normalized to `[0, 1]`.
///
/// # Safety
/// `response` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ta_parse_boxed_score(response: *const c_char, scale: TaScale, out: *mut f64) -> TaStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(response, "response")?;
        let scale = match scale {
            TaScale::TenToUnit => Scale::TenToUnit,
            TaScale::Unit => Scale::Unit,
        };
        *out = trajalign::parse_boxed_score(text, scale).map_err(lib_err)?;
        Ok(())
    })
}
