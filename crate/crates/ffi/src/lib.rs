//! C ABI for loading cohorts and checkpoints and scoring samples.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns a [`VampStatus`]; on
//! failure `vamp_last_error` describes the problem for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vampnet::checkpoint::{Checkpoint, ModelKind};
use vampnet::cohort::Cohort;
use vampnet::error::VampError;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VampStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Usage = 3,
    Config = 4,
    Parse = 5,
    Io = 6,
    Contract = 7,
    Dimension = 8,
    NumericDomain = 9,
    BufferTooSmall = 10,
    OutOfRange = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VampModelKind {
    SetModel = 0,
    Mlp = 1,
    Cnn = 2,
}

/// A loaded cohort.
pub struct VampCohort(Cohort);

/// A loaded checkpoint.
pub struct VampModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &VampError) -> VampStatus {
    match err {
        VampError::Dimension(_) => VampStatus::Dimension,
        VampError::NumericDomain(_) => VampStatus::NumericDomain,
        VampError::Config(_) => VampStatus::Config,
        VampError::Parse { .. } => VampStatus::Parse,
        VampError::Contract(_) => VampStatus::Contract,
        VampError::Usage(_) => VampStatus::Usage,
        VampError::Io { .. } => VampStatus::Io,
    }
}

fn fail(status: VampStatus, msg: impl Into<String>) -> VampStatus {
    set_error(msg.into());
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (VampStatus, String)>) -> VampStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VampStatus::Ok,
        Ok(Err((s, msg))) => fail(s, msg),
        Err(_) => fail(VampStatus::Panic, "internal panic"),
    }
}

fn lib(e: VampError) -> (VampStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VampStatus, String)> {
    if p.is_null() {
        return Err((VampStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (VampStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (VampStatus, String)> {
    p.as_mut().ok_or_else(|| (VampStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (VampStatus, String)> {
    p.as_ref().ok_or_else(|| (VampStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn vamp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vamp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Read a cohort interchange file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vamp_cohort_load(path: *const c_char, out: *mut *mut VampCohort) -> VampStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let c = Cohort::read(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(VampCohort(c)));
        Ok(())
    })
}

/// Parse a cohort from the text of an interchange file.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vamp_cohort_parse(text: *const c_char, out: *mut *mut VampCohort) -> VampStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let c = Cohort::from_text(text).map_err(lib)?;
        *out = Box::into_raw(Box::new(VampCohort(c)));
        Ok(())
    })
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `cohort` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vamp_cohort_len(cohort: *const VampCohort) -> usize {
    cohort.as_ref().map_or(0, |c| c.0.len())
}

/// Label (1 = resistant) of sample `index`.
///
/// # Safety
/// `cohort` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vamp_cohort_label(cohort: *const VampCohort, index: usize, out: *mut u8) -> VampStatus {
    guard(|| {
        let c = handle(cohort, "cohort")?;
        let out = out_arg(out, "out")?;
        let s = c
            .0
            .samples
            .get(index)
            .ok_or_else(|| (VampStatus::OutOfRange, format!("sample {index} of {}", c.0.len())))?;
        *out = s.label;
        Ok(())
    })
}

/// # Safety
/// `cohort` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vamp_cohort_free(cohort: *mut VampCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vamp_model_load(path: *const c_char, out: *mut *mut VampModel) -> VampStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let ck = Checkpoint::read(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(VampModel(ck)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vamp_model_kind(model: *const VampModel, out: *mut VampModelKind) -> VampStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out_arg(out, "out")? = match m.0.model.kind() {
            ModelKind::VampNet => VampModelKind::SetModel,
            ModelKind::Mlp => VampModelKind::Mlp,
            ModelKind::Cnn => VampModelKind::Cnn,
        };
        Ok(())
    })
}

/// Resistant-class probability for every sample of `cohort`, in sample
/// order. `len` is the capacity of `scores` and must cover the cohort.
///
/// # Safety
/// Both handles must be live and `scores` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vamp_model_score(
    model: *const VampModel,
    cohort: *const VampCohort,
    scores: *mut f64,
    len: usize,
) -> VampStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let c = handle(cohort, "cohort")?;
        if scores.is_null() {
            return Err((VampStatus::NullPointer, "scores is null".into()));
        }
        if len < c.0.len() {
            return Err((
                VampStatus::BufferTooSmall,
                format!("buffer holds {len} scores, cohort has {}", c.0.len()),
            ));
        }
        let s = m.0.score(&c.0).map_err(lib)?;
        std::slice::from_raw_parts_mut(scores, s.len()).copy_from_slice(&s);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vamp_model_free(model: *mut VampModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
