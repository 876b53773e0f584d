//! C ABI over `kcmlab`.
//!
//! Families and configurations are opaque handles owned by the caller and released with the
//! matching `_free` function. Strings returned by the library are released with
//! [`kcmlab_string_free`]. Every function returns a [`KcmStatus`]; on failure a message is
//! available from [`kcmlab_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kcmlab::bootstrap;
use kcmlab::classify::{classify_1d, refine, SearchParams};
use kcmlab::spectra::GeneratorModel;
use kcmlab::{BoundaryCondition, Configuration, Error, UpdateFamily};

/// Opaque update family.
pub struct KcmFamily(UpdateFamily);

/// Opaque configuration on a rectangular region.
pub struct KcmConfig(Configuration);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KcmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    MissingBoundary = 4,
    TooLarge = 5,
    Numeric = 6,
    Panic = 7,
}

/// Every site outside the region occupied.
pub const KCMLAB_BC_OCCUPIED: u32 = 0;
/// Every site outside the region empty.
pub const KCMLAB_BC_EMPTY: u32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &Error) -> KcmStatus {
    match e {
        Error::Parse(_) => KcmStatus::Parse,
        Error::MissingBoundary(_) => KcmStatus::MissingBoundary,
        Error::TooLarge(_) => KcmStatus::TooLarge,
        Error::NonConvergence { .. } => KcmStatus::Numeric,
        _ => KcmStatus::InvalidArgument,
    }
}

struct Fail(KcmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KcmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KcmStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            KcmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(KcmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(KcmStatus::Parse, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn check_out<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

fn bc(code: u32) -> Result<BoundaryCondition, Fail> {
    match code {
        KCMLAB_BC_OCCUPIED => Ok(BoundaryCondition::AllOccupied),
        KCMLAB_BC_EMPTY => Ok(BoundaryCondition::AllEmpty),
        _ => Err(Fail(KcmStatus::InvalidArgument, format!("unknown boundary code {code}"))),
    }
}

fn owned_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s).map(CString::into_raw).map_err(|_| Fail(KcmStatus::InvalidArgument, "string contains NUL".into()))
}

/// Message of the last failure on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn kcmlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kcmlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_family_catalog(name: *const c_char, out: *mut *mut KcmFamily) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = UpdateFamily::catalog(text(name, "name")?)?;
        *out = Box::into_raw(Box::new(KcmFamily(f)));
        Ok(())
    })
}

/// Parses `{"dim":2,"rules":[[[dx,dy],...],...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_family_from_json(json: *const c_char, out: *mut *mut KcmFamily) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = UpdateFamily::from_json(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(KcmFamily(f)));
        Ok(())
    })
}

/// # Safety
/// `family` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_family_free(family: *mut KcmFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// Classification report as a JSON string, released with [`kcmlab_string_free`].
///
/// # Safety
/// `family` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_classify_json(family: *const KcmFamily, out: *mut *mut c_char) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = &deref(family, "family")?.0;
        let json = if f.dim() == 1 {
            serde_json::to_string(&classify_1d(f)?)
        } else {
            serde_json::to_string(&refine(f, SearchParams::for_family(f))?)
        }
        .map_err(|e| Fail(KcmStatus::InvalidArgument, e.to_string()))?;
        *out = owned_string(json)?;
        Ok(())
    })
}

/// Parses the text format: a `W H origin_x origin_y` header, then H rows of `0`/`1`.
///
/// # Safety
/// `src` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_config_parse(src: *const c_char, out: *mut *mut KcmConfig) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        let c = Configuration::parse(text(src, "text")?)?;
        *out = Box::into_raw(Box::new(KcmConfig(c)));
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_config_to_text(config: *const KcmConfig, out: *mut *mut c_char) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = owned_string(deref(config, "config")?.0.to_text())?;
        Ok(())
    })
}

/// Number of empty sites.
///
/// # Safety
/// `config` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_config_vacancies(config: *const KcmConfig, out: *mut usize) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = deref(config, "config")?.0.vacancy_count();
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_config_free(config: *mut KcmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Bootstrap closure of `config`. `rounds` may be NULL.
///
/// # Safety
/// Handles must be live; `out` must be writable; `rounds` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_closure(
    family: *const KcmFamily,
    config: *const KcmConfig,
    boundary: u32,
    out: *mut *mut KcmConfig,
    rounds: *mut u32,
) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = &deref(family, "family")?.0;
        let c = &deref(config, "config")?.0;
        let r = bootstrap::closure(f, c, &bc(boundary)?)?;
        if !rounds.is_null() {
            *rounds = r.rounds;
        }
        *out = Box::into_raw(Box::new(KcmConfig(r.closure)));
        Ok(())
    })
}

/// Relaxation time of the dynamics restricted to the ergodic component of `config`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_relaxation_time(
    family: *const KcmFamily,
    config: *const KcmConfig,
    boundary: u32,
    q: f64,
    out: *mut f64,
) -> KcmStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = &deref(family, "family")?.0;
        let c = &deref(config, "config")?.0;
        let model = GeneratorModel::build(f, &bc(boundary)?, q, c)?;
        *out = model.relaxation_time()?;
        Ok(())
    })
}

/// # Safety
/// `s` must be a string returned by this library, not freed before. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn kcmlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
