//! C interface to the instance, action and linearized-operator layers.
//!
//! Every function returns a [`CvpStatus`]. On failure the message is available
//! from [`cvp_last_error_message`] on the same thread until the next call.
//! Objects are opaque handles created by `cvp_instance_*` constructors and
//! released with [`cvp_instance_free`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cvp::action::{check_restricted_el, eval_action, eval_ell, solve_critical_weights};
use cvp::jets::{all_axes, build_space};
use cvp::linfield::assemble_delta;
use cvp::{Error, Instance, JetVector, KernelSpec};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numerical = 4,
    Panic = 5,
}

/// Opaque instance handle.
pub struct CvpInstance {
    inner: Instance,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let s = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> CvpStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) | Error::Io(_) | Error::Csv(_) => CvpStatus::Parse,
        Error::InvalidInstance(_)
        | Error::Lattice(_)
        | Error::Shape(_)
        | Error::NonFinite(_)
        | Error::Config(_) => CvpStatus::InvalidArgument,
        _ => CvpStatus::Numerical,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CvpStatus, String)>) -> CvpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CvpStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            CvpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CvpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CvpStatus, String) {
    (CvpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn instance<'a>(h: *const CvpInstance) -> Result<&'a Instance, (CvpStatus, String)> {
    h.as_ref().map(|h| &h.inner).ok_or_else(|| null("instance"))
}

unsafe fn string<'a>(s: *const c_char, what: &str) -> Result<&'a str, (CvpStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (CvpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn emit(out: *mut *mut CvpInstance, inst: Instance) -> Result<(), (CvpStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(CvpInstance { inner: inst }));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
#[no_mangle]
pub extern "C" fn cvp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses and validates an instance from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvp_instance_from_json(
    json: *const c_char,
    out: *mut *mut CvpInstance,
) -> CvpStatus {
    guard(|| {
        let text = string(json, "json")?;
        let inst: Instance =
            serde_json::from_str(text).map_err(|e| (CvpStatus::Parse, e.to_string()))?;
        inst.validate().map_err(lib_err)?;
        emit(out, inst)
    })
}

/// Reads an instance file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvp_instance_load(
    path: *const c_char,
    out: *mut *mut CvpInstance,
) -> CvpStatus {
    guard(|| {
        let p = string(path, "path")?;
        emit(out, cvp::io::read_instance(Path::new(p)).map_err(lib_err)?)
    })
}

/// Regular lattice with unit weights and the isotropic bump kernel.
///
/// # Safety
/// `extent` must point to `dim` entries, `periodic_axes` to `n_periodic`
/// entries (it may be null when `n_periodic` is 0), `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cvp_instance_generate_lattice(
    dim: usize,
    extent: *const usize,
    spacing: f64,
    range: f64,
    amplitude: f64,
    periodic_axes: *const usize,
    n_periodic: usize,
    s_param: f64,
    out: *mut *mut CvpInstance,
) -> CvpStatus {
    guard(|| {
        if extent.is_null() {
            return Err(null("extent"));
        }
        let ext = std::slice::from_raw_parts(extent, dim);
        let per = if n_periodic == 0 {
            &[][..]
        } else if periodic_axes.is_null() {
            return Err(null("periodic_axes"));
        } else {
            std::slice::from_raw_parts(periodic_axes, n_periodic)
        };
        let inst = Instance::generate_lattice(
            dim,
            ext,
            spacing,
            KernelSpec::iso(range, amplitude),
            per,
            s_param,
        )
        .map_err(lib_err)?;
        emit(out, inst)
    })
}

/// Serializes an instance; release the string with [`cvp_string_free`].
///
/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvp_instance_to_json(
    inst: *const CvpInstance,
    out: *mut *mut c_char,
) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = serde_json::to_string(inst).map_err(|e| (CvpStatus::Parse, e.to_string()))?;
        *out = CString::new(s)
            .map_err(|e| (CvpStatus::Parse, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cvp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `inst` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cvp_instance_free(inst: *mut CvpInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of points and of coefficients per jet (`1 + dim`).
///
/// # Safety
/// `inst` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn cvp_instance_shape(
    inst: *const CvpInstance,
    n_points: *mut usize,
    block: *mut usize,
) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        if let Some(n) = n_points.as_mut() {
            *n = inst.n_points();
        }
        if let Some(b) = block.as_mut() {
            *b = inst.block();
        }
        Ok(())
    })
}

/// New instance with critical weights.
///
/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvp_critical_weights(
    inst: *const CvpInstance,
    out: *mut *mut CvpInstance,
) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        emit(out, solve_critical_weights(inst).map_err(lib_err)?)
    })
}

/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvp_eval_action(inst: *const CvpInstance, out: *mut f64) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        *out.as_mut().ok_or_else(|| null("out"))? = eval_action(inst);
        Ok(())
    })
}

/// Writes `ℓ` (`n_points` values) and, if `grad` is not null, `Dℓ` row by row
/// (`n_points * dim` values).
///
/// # Safety
/// The buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cvp_eval_ell(
    inst: *const CvpInstance,
    ell: *mut f64,
    grad: *mut f64,
) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        if ell.is_null() {
            return Err(null("ell"));
        }
        let rep = eval_ell(inst);
        std::slice::from_raw_parts_mut(ell, inst.n_points()).copy_from_slice(&rep.ell);
        if !grad.is_null() {
            let g = std::slice::from_raw_parts_mut(grad, inst.n_points() * inst.dim);
            for (row, d) in g.chunks_mut(inst.dim).zip(&rep.grad_ell) {
                row.copy_from_slice(d);
            }
        }
        Ok(())
    })
}

/// `out = Δv` for a flat jet `v` of `len = n_points * block` coefficients.
///
/// # Safety
/// `v` and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cvp_apply_delta(
    inst: *const CvpInstance,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        if v.is_null() || out.is_null() {
            return Err(null("jet buffer"));
        }
        let coeffs = nalgebra::DVector::from_column_slice(std::slice::from_raw_parts(v, len));
        let jet = JetVector::from_coeffs(inst, coeffs).map_err(lib_err)?;
        let dv = assemble_delta(inst).apply(&jet);
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(dv.coeffs.as_slice());
        Ok(())
    })
}

/// Restricted Euler-Lagrange check with scalars and all translations at every point.
///
/// # Safety
/// `inst` must be a live handle; `passed` and `worst` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cvp_check_el(
    inst: *const CvpInstance,
    tol: f64,
    passed: *mut bool,
    worst: *mut f64,
) -> CvpStatus {
    guard(|| {
        let inst = instance(inst)?;
        if !(tol > 0.0) {
            return Err((CvpStatus::InvalidArgument, "tol must be positive".into()));
        }
        let all: Vec<usize> = (0..inst.n_points()).collect();
        let check = check_restricted_el(inst, &build_space(inst, &all, all_axes(inst), None), tol);
        *passed.as_mut().ok_or_else(|| null("passed"))? = check.pass;
        *worst.as_mut().ok_or_else(|| null("worst"))? = check.worst;
        Ok(())
    })
}
