//! C ABI for the cqt engine.
//!
//! Families are built from scenario JSON and handed out as opaque
//! `CqtFamily` pointers, released with `cqt_family_free`. Every call returns
//! a `CqtStatus`; on failure `cqt_last_error` describes the cause. History
//! indices are zero-based here, unlike the one-based CLI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cqt::histories::{classify_with, event_probability, ClassifyOptions, DynamicEvent, Family, HistoryIndex, Verdict};
use cqt::oracles::{mermin_no_go, NoGoInstance};
use cqt::scenario::Scenario;
use cqt::CqtError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    Inconsistent = 5,
    CapExceeded = 6,
    Panic = 7,
}

/// Mirrors the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqtVerdict {
    MediumConsistent = 0,
    WeakOnly = 2,
    Inconsistent = 3,
}

impl From<Verdict> for CqtVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::MediumConsistent => CqtVerdict::MediumConsistent,
            Verdict::WeakOnly => CqtVerdict::WeakOnly,
            Verdict::Inconsistent => CqtVerdict::Inconsistent,
        }
    }
}

/// Opaque family handle.
pub struct CqtFamily {
    family: Family,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &CqtError) -> CqtStatus {
    match e {
        CqtError::InconsistentFamily { .. } => CqtStatus::Inconsistent,
        CqtError::CapExceeded { .. } => CqtStatus::CapExceeded,
        _ => CqtStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CqtStatus, String)>) -> CqtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CqtStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CqtStatus::Panic
        }
    }
}

fn engine(e: CqtError) -> (CqtStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (CqtStatus, String) {
    (CqtStatus::NullPointer, "null pointer argument".into())
}

unsafe fn family<'a>(ptr: *const CqtFamily) -> Result<&'a Family, (CqtStatus, String)> {
    ptr.as_ref().map(|f| &f.family).ok_or_else(null)
}

unsafe fn read_history(ptr: *const usize, len: usize) -> Result<HistoryIndex, (CqtStatus, String)> {
    if ptr.is_null() && len > 0 {
        return Err(null());
    }
    let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(ptr, len) };
    Ok(HistoryIndex(slice.to_vec()))
}

fn options(tol: f64) -> ClassifyOptions {
    ClassifyOptions { tol: if tol > 0.0 { tol } else { ClassifyOptions::default().tol }, ..ClassifyOptions::default() }
}

/// Parse a scenario JSON document into a family.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cqt_family_from_json(json: *const c_char, out: *mut *mut CqtFamily) -> CqtStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (CqtStatus::InvalidUtf8, e.to_string()))?;
        let scenario = Scenario::parse(text).map_err(|e| (CqtStatus::Parse, e.to_string()))?;
        let handle = Box::new(CqtFamily { family: scenario.family().clone() });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Release a family. Null is ignored.
///
/// # Safety
/// `fam` must come from `cqt_family_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cqt_family_free(fam: *mut CqtFamily) {
    if !fam.is_null() {
        drop(Box::from_raw(fam));
    }
}

/// Number of times `N` in the family.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cqt_family_times(fam: *const CqtFamily, out: *mut usize) -> CqtStatus {
    guard(|| {
        let f = family(fam)?;
        *out.as_mut().ok_or_else(null)? = f.len();
        Ok(())
    })
}

/// Number of elementary histories.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cqt_family_history_count(fam: *const CqtFamily, out: *mut usize) -> CqtStatus {
    guard(|| {
        let f = family(fam)?;
        *out.as_mut().ok_or_else(null)? = f.history_count();
        Ok(())
    })
}

/// Born probability of one elementary history given as `len` zero-based
/// member indices.
///
/// # Safety
/// `history` must point to `len` readable values; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn cqt_born_probability(
    fam: *const CqtFamily,
    history: *const usize,
    len: usize,
    out: *mut f64,
) -> CqtStatus {
    guard(|| {
        let f = family(fam)?;
        let h = read_history(history, len)?;
        let p = f.born_probability(&h).map_err(engine)?;
        *out.as_mut().ok_or_else(null)? = p;
        Ok(())
    })
}

/// Decoherence functional `D(h1, h2)`.
///
/// # Safety
/// `h1` and `h2` must each point to `len` readable values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn cqt_decoherence(
    fam: *const CqtFamily,
    h1: *const usize,
    h2: *const usize,
    len: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> CqtStatus {
    guard(|| {
        let f = family(fam)?;
        let d = f.decoherence_functional(&read_history(h1, len)?, &read_history(h2, len)?).map_err(engine)?;
        *out_re.as_mut().ok_or_else(null)? = d.re;
        *out_im.as_mut().ok_or_else(null)? = d.im;
        Ok(())
    })
}

/// Classify the family. `tol <= 0` selects the default tolerance.
/// `offdiag_max` may be null.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cqt_classify(
    fam: *const CqtFamily,
    tol: f64,
    verdict: *mut CqtVerdict,
    offdiag_max: *mut f64,
) -> CqtStatus {
    guard(|| {
        let f = family(fam)?;
        let r = classify_with(f, options(tol)).map_err(engine)?;
        *verdict.as_mut().ok_or_else(null)? = r.verdict.into();
        if let Some(m) = offdiag_max.as_mut() {
            *m = r.offdiag_max;
        }
        Ok(())
    })
}

/// Probability of the event made of `count` histories stored back to back
/// (`count * N` indices). Fails with `CQT_STATUS_INCONSISTENT` unless the
/// family is medium consistent.
///
/// # Safety
/// `histories` must point to `count * N` readable values.
#[no_mangle]
pub unsafe extern "C" fn cqt_event_probability(
    fam: *const CqtFamily,
    histories: *const usize,
    count: usize,
    tol: f64,
    out: *mut f64,
) -> CqtStatus {
    guard(|| {
        let f = family(fam)?;
        let n = f.len();
        let flat = read_history(histories, count * n)?;
        let event = DynamicEvent::new(f, flat.0.chunks(n).map(|c| HistoryIndex(c.to_vec()))).map_err(engine)?;
        let report = classify_with(f, options(tol)).map_err(engine)?;
        let p = event_probability(f, &event, &report).map_err(engine)?;
        *out.as_mut().ok_or_else(null)? = p;
        Ok(())
    })
}

/// Number of ±1 assignments satisfying the magic-square constraints.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cqt_mermin_count(out: *mut usize) -> CqtStatus {
    guard(|| {
        *out.as_mut().ok_or_else(null)? = mermin_no_go(&NoGoInstance::peres_mermin());
        Ok(())
    })
}

/// Message for the last failing call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cqt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn cqt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
