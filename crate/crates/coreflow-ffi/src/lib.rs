//! C ABI for the coreflow workflow engine: parse, validate, and serialize
//! workflows through an opaque handle.
//!
//! Conventions:
//! - Functions returning `int` use the `COREFLOW_*` status codes below.
//! - Returned strings are NUL-terminated, owned by the caller, and must be
//!   released with `coreflow_string_free`.
//! - Workflow handles must be released with `coreflow_workflow_free`.
//! - On any non-OK status, `coreflow_last_error_message` returns a
//!   human-readable description of the most recent error on this thread.

use coreflow::lang::{self, Workflow};
use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};

pub const COREFLOW_OK: c_int = 0;
pub const COREFLOW_ERR_INVALID_WORKFLOW: c_int = 1;
pub const COREFLOW_ERR_PARSE: c_int = 2;
pub const COREFLOW_ERR_NULL_ARGUMENT: c_int = 3;
pub const COREFLOW_ERR_BAD_UTF8: c_int = 4;

/// Opaque workflow handle.
pub struct CoreflowWorkflow {
    inner: Workflow,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = CString::new(message.into().replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior NUL").into_raw()
}

/// Returns the most recent error message on this thread, or NULL if the last
/// call succeeded. Free with `coreflow_string_free`.
#[no_mangle]
pub extern "C" fn coreflow_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Parses workflow text into a new handle stored in `out`. On failure `out`
/// is left untouched and a status code is returned.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coreflow_workflow_parse(
    text: *const c_char,
    out: *mut *mut CoreflowWorkflow,
) -> c_int {
    if text.is_null() || out.is_null() {
        set_error("text and out must not be NULL");
        return COREFLOW_ERR_NULL_ARGUMENT;
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(e) => {
            set_error(format!("workflow text is not UTF-8: {e}"));
            return COREFLOW_ERR_BAD_UTF8;
        }
    };
    match lang::parse_workflow(text) {
        Ok(workflow) => {
            clear_error();
            *out = Box::into_raw(Box::new(CoreflowWorkflow { inner: workflow }));
            COREFLOW_OK
        }
        Err(e) => {
            set_error(e.to_string());
            COREFLOW_ERR_PARSE
        }
    }
}

/// Releases a workflow handle. NULL is a no-op.
///
/// # Safety
/// `workflow` must be a handle returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn coreflow_workflow_free(workflow: *mut CoreflowWorkflow) {
    if !workflow.is_null() {
        drop(Box::from_raw(workflow));
    }
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be a string returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn coreflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of steps in the workflow, or -1 for a NULL handle.
///
/// # Safety
/// `workflow` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn coreflow_workflow_step_count(workflow: *const CoreflowWorkflow) -> c_int {
    if workflow.is_null() {
        set_error("workflow must not be NULL");
        return -1;
    }
    (*workflow).inner.steps.len() as c_int
}

/// Serializes the workflow into canonical text. Returns NULL on a NULL
/// handle. Free the result with `coreflow_string_free`.
///
/// # Safety
/// `workflow` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn coreflow_workflow_serialize(
    workflow: *const CoreflowWorkflow,
) -> *mut c_char {
    if workflow.is_null() {
        set_error("workflow must not be NULL");
        return std::ptr::null_mut();
    }
    clear_error();
    to_c_string(lang::serialize(&(*workflow).inner))
}

/// Validates the workflow: COREFLOW_OK when valid,
/// COREFLOW_ERR_INVALID_WORKFLOW when any error-severity issue exists (the
/// report is available via `coreflow_last_error_message`).
///
/// # Safety
/// `workflow` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn coreflow_workflow_validate(workflow: *const CoreflowWorkflow) -> c_int {
    if workflow.is_null() {
        set_error("workflow must not be NULL");
        return COREFLOW_ERR_NULL_ARGUMENT;
    }
    let report = lang::validate(&(*workflow).inner);
    if report.valid {
        clear_error();
        COREFLOW_OK
    } else {
        set_error(report.to_string());
        COREFLOW_ERR_INVALID_WORKFLOW
    }
}

/// The validation report as JSON (`{"valid": bool, "issues": [...]}`).
/// Returns NULL on a NULL handle. Free with `coreflow_string_free`.
///
/// # Safety
/// `workflow` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn coreflow_workflow_validation_report(
    workflow: *const CoreflowWorkflow,
) -> *mut c_char {
    if workflow.is_null() {
        set_error("workflow must not be NULL");
        return std::ptr::null_mut();
    }
    clear_error();
    let report = lang::validate(&(*workflow).inner);
    to_c_string(serde_json::to_string(&report).expect("report serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use coreflow::lang::EXAMPLE_WORKFLOW;
    use std::ffi::CString;

    fn parse(text: &str) -> (c_int, *mut CoreflowWorkflow) {
        let c_text = CString::new(text).unwrap();
        let mut handle: *mut CoreflowWorkflow = std::ptr::null_mut();
        let code = unsafe { coreflow_workflow_parse(c_text.as_ptr(), &mut handle) };
        (code, handle)
    }

    fn take_string(ptr: *mut c_char) -> String {
        assert!(!ptr.is_null());
        let s = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string();
        unsafe { coreflow_string_free(ptr) };
        s
    }

    #[test]
    fn parse_serialize_round_trip() {
        let (code, handle) = parse(EXAMPLE_WORKFLOW);
        assert_eq!(code, COREFLOW_OK);
        assert_eq!(unsafe { coreflow_workflow_step_count(handle) }, 6);
        let text = take_string(unsafe { coreflow_workflow_serialize(handle) });
        assert_eq!(text, EXAMPLE_WORKFLOW);
        assert_eq!(unsafe { coreflow_workflow_validate(handle) }, COREFLOW_OK);
        assert!(unsafe { coreflow_last_error_message() }.is_null());
        unsafe { coreflow_workflow_free(handle) };
    }

    #[test]
    fn parse_failure_sets_error_message() {
        let (code, _) = parse("not a workflow");
        assert_eq!(code, COREFLOW_ERR_PARSE);
        let message = take_string(coreflow_last_error_message());
        assert!(message.contains("line 1"));
    }

    #[test]
    fn invalid_workflow_reports_issues() {
        let (code, handle) = parse("Step 1:::Process:::Go.:::next::Step 9\nStep 2:::Terminal:::End.:::");
        assert_eq!(code, COREFLOW_OK);
        assert_eq!(unsafe { coreflow_workflow_validate(handle) }, COREFLOW_ERR_INVALID_WORKFLOW);
        let message = take_string(coreflow_last_error_message());
        assert!(message.contains("Step 9"));
        let report = take_string(unsafe { coreflow_workflow_validation_report(handle) });
        let value: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert_eq!(value["valid"], false);
        unsafe { coreflow_workflow_free(handle) };
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut handle: *mut CoreflowWorkflow = std::ptr::null_mut();
        assert_eq!(
            unsafe { coreflow_workflow_parse(std::ptr::null(), &mut handle) },
            COREFLOW_ERR_NULL_ARGUMENT
        );
        assert_eq!(unsafe { coreflow_workflow_step_count(std::ptr::null()) }, -1);
        assert!(unsafe { coreflow_workflow_serialize(std::ptr::null()) }.is_null());
        unsafe {
            coreflow_workflow_free(std::ptr::null_mut());
            coreflow_string_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn bad_utf8_is_rejected() {
        let bytes = [0xffu8, 0xfe, 0x00];
        let mut handle: *mut CoreflowWorkflow = std::ptr::null_mut();
        let code =
            unsafe { coreflow_workflow_parse(bytes.as_ptr() as *const c_char, &mut handle) };
        assert_eq!(code, COREFLOW_ERR_BAD_UTF8);
    }
}
