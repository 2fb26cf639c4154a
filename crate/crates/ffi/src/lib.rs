// SPDX-License-Identifier: Apache-2.0

//! C ABI over the equilibria model types.
//!
//! Every fallible function returns an [`EqStatus`]; on failure the message is
//! kept per thread and read with [`eq_last_error_message`]. Handles are opaque
//! and owned by the caller until passed to [`eq_model_free`]. Array arguments
//! are row-major `double` buffers with an explicit length. Panics never cross
//! the boundary; they surface as [`EqStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use equilibria::checkpoint::{self, CheckpointMeta};
use equilibria::equilibrium::{ImplicitDims, ImplicitModel, SolverSettings};
use equilibria::harness::{DataLayout, Model};
use equilibria::numerics::Matrix;
use equilibria::Error;

/// Result of every fallible call. Codes 2 to 10 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DimensionMismatch = 3,
    NumericFailure = 4,
    NonConvergence = 5,
    Usage = 6,
    Unknown = 7,
    Format = 8,
    Empty = 9,
    Io = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

impl From<&Error> for EqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parameter(_) => EqStatus::InvalidParameter,
            Error::Dimension(_) => EqStatus::DimensionMismatch,
            Error::Numeric(_) => EqStatus::NumericFailure,
            Error::NonConvergence(_) => EqStatus::NonConvergence,
            Error::Usage(_) => EqStatus::Usage,
            Error::Unknown { .. } => EqStatus::Unknown,
            Error::Format(_) | Error::Json(_) => EqStatus::Format,
            Error::Empty(_) => EqStatus::Empty,
            Error::Io { .. } => EqStatus::Io,
        }
    }
}

/// Opaque model handle.
pub struct EqModel {
    model: Model,
    layout: DataLayout,
    meta: CheckpointMeta,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    // Interior NULs would truncate the message on the C side anyway.
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(EqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(EqStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: EqStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with a non-string payload".into());
            set_error(format!("internal panic: {msg}"));
            EqStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(p: *const EqModel) -> Result<&'a EqModel, Failure> {
    p.as_ref().map_or_else(|| fail(EqStatus::NullPointer, "model handle is null"), Ok)
}

unsafe fn model_mut<'a>(p: *mut EqModel) -> Result<&'a mut EqModel, Failure> {
    p.as_mut().map_or_else(|| fail(EqStatus::NullPointer, "model handle is null"), Ok)
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(EqStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(EqStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return fail(EqStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => fail(EqStatus::InvalidUtf8, "path is not valid UTF-8"),
    }
}

fn copy_out(dst: &mut [f64], src: &[f64], what: &str) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return fail(
            EqStatus::DimensionMismatch,
            format!("{what} buffer has length {}, expected {}", dst.len(), src.len()),
        );
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn core(m: &EqModel) -> Result<&ImplicitModel, Failure> {
    m.model
        .implicit_core()
        .map_or_else(|| fail(EqStatus::Usage, "model has no equilibrium core"), Ok)
}

unsafe fn write_opt<T>(p: *mut T, v: T) {
    if !p.is_null() {
        *p = v;
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn eq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Random implicit model with `n` states, `p` inputs and `q` outputs and the
/// default solver settings. Without feedback `A` is strictly upper triangular.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn eq_model_new_implicit(
    n: usize,
    p: usize,
    q: usize,
    feedback: bool,
    seed: u64,
    out: *mut *mut EqModel,
) -> EqStatus {
    guard(|| {
        if out.is_null() {
            return fail(EqStatus::NullPointer, "output handle pointer is null");
        }
        let core = ImplicitModel::random(ImplicitDims { n, p, q }, SolverSettings::default(), feedback, seed)?;
        let handle = EqModel {
            model: Model::Implicit(core),
            layout: DataLayout {
                steps: 1,
                step_input: p,
                step_target: q,
                target_blocks: 1,
            },
            meta: CheckpointMeta::default(),
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Loads a checkpoint written by the command-line tool or [`eq_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_model_load(path: *const c_char, out: *mut *mut EqModel) -> EqStatus {
    guard(|| {
        if out.is_null() {
            return fail(EqStatus::NullPointer, "output handle pointer is null");
        }
        let (model, meta) = checkpoint::load(path_arg(path)?)?;
        let layout = match (meta.layout, model.implicit_core()) {
            (Some(l), _) => l,
            (None, Some(c)) if matches!(model, Model::Implicit(_)) => {
                let d = c.dims();
                DataLayout {
                    steps: 1,
                    step_input: d.p,
                    step_target: d.q,
                    target_blocks: 1,
                }
            }
            _ => return fail(EqStatus::Format, "checkpoint records no data layout"),
        };
        model.check_layout(&layout)?;
        *out = Box::into_raw(Box::new(EqModel { model, layout, meta }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eq_model_save(model: *const EqModel, path: *const c_char) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        let mut meta = m.meta.clone();
        meta.layout = Some(m.layout);
        checkpoint::save(path_arg(path)?, &m.model, &meta)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eq_model_free(model: *mut EqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Flattened input length and scored output length of one sample.
///
/// # Safety
/// `model` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn eq_model_io_len(model: *const EqModel, input_len: *mut usize, output_len: *mut usize) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_opt(input_len, m.layout.input_len());
        write_opt(output_len, m.layout.step_target);
        Ok(())
    })
}

/// State, input and output sizes of the equilibrium core.
///
/// # Safety
/// `model` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn eq_model_dims(model: *const EqModel, n: *mut usize, p: *mut usize, q: *mut usize) -> EqStatus {
    guard(|| {
        let d = core(model_ref(model)?)?.dims();
        write_opt(n, d.n);
        write_opt(p, d.p);
        write_opt(q, d.q);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_model_parameter_count(model: *const EqModel, count: *mut usize) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        if count.is_null() {
            return fail(EqStatus::NullPointer, "count is null");
        }
        *count = m.model.parameter_count();
        Ok(())
    })
}

/// Scored prediction for one flattened input sample. `iterations` (nullable)
/// receives the total forward solver iterations.
///
/// # Safety
/// Buffers must hold at least the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_model_predict(
    model: *const EqModel,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
    iterations: *mut usize,
) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        let u = slice(input, input_len, "input")?;
        let dst = slice_mut(output, output_len, "output")?;
        let res = m.model.forward(u, &m.layout, None)?;
        copy_out(dst, res.scored(), "output")?;
        write_opt(iterations, res.iterations.iter().sum());
        Ok(())
    })
}

/// Equilibrium state `x = φ(A x + B u)` of the core from a zero start.
///
/// # Safety
/// Buffers must hold at least the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_model_solve(
    model: *const EqModel,
    u: *const f64,
    u_len: usize,
    x: *mut f64,
    x_len: usize,
    iterations: *mut usize,
) -> EqStatus {
    guard(|| {
        let c = core(model_ref(model)?)?;
        let u = slice(u, u_len, "u")?;
        let dst = slice_mut(x, x_len, "x")?;
        let sol = c.solve_forward(u, &vec![0.0; c.dims().n])?;
        if !sol.converged {
            return fail(
                EqStatus::NonConvergence,
                format!("no convergence in {} iterations", sol.iterations),
            );
        }
        copy_out(dst, &sol.x, "x")?;
        write_opt(iterations, sol.iterations);
        Ok(())
    })
}

/// Gradients of a loss with output gradient `dl_dy` at input `u` with respect to
/// `A` (n×n), `B` (n×p), `C` (q×n) and `D` (q×p). Without feedback the lower
/// triangle of `dA` is zero.
///
/// # Safety
/// Buffers must hold at least the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_model_gradients(
    model: *const EqModel,
    u: *const f64,
    u_len: usize,
    dl_dy: *const f64,
    dl_dy_len: usize,
    da: *mut f64,
    da_len: usize,
    db: *mut f64,
    db_len: usize,
    dc: *mut f64,
    dc_len: usize,
    dd: *mut f64,
    dd_len: usize,
) -> EqStatus {
    guard(|| {
        let c = core(model_ref(model)?)?;
        let u = slice(u, u_len, "u")?;
        let g = slice(dl_dy, dl_dy_len, "dl_dy")?;
        let sol = c.solve_forward(u, &vec![0.0; c.dims().n])?;
        if !sol.converged {
            return fail(
                EqStatus::NonConvergence,
                format!("no convergence in {} iterations", sol.iterations),
            );
        }
        let mut grads = c.solve_backward(u, &sol, g)?;
        if !c.feedback() {
            grads.da.mask_strictly_upper();
        }
        copy_out(slice_mut(da, da_len, "dA")?, grads.da.as_slice(), "dA")?;
        copy_out(slice_mut(db, db_len, "dB")?, grads.db.as_slice(), "dB")?;
        copy_out(slice_mut(dc, dc_len, "dC")?, grads.dc.as_slice(), "dC")?;
        copy_out(slice_mut(dd, dd_len, "dD")?, grads.dd.as_slice(), "dD")?;
        Ok(())
    })
}

/// Applies one plain gradient step `θ ← θ − lr · dθ` to the core and re-projects.
///
/// # Safety
/// Buffers must hold at least the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_model_sgd_step(
    model: *mut EqModel,
    lr: f64,
    da: *const f64,
    db: *const f64,
    dc: *const f64,
    dd: *const f64,
) -> EqStatus {
    guard(|| {
        let m = model_mut(model)?;
        let core = m
            .model
            .implicit_core_mut()
            .map_or_else(|| fail(EqStatus::Usage, "model has no equilibrium core"), Ok)?;
        if !lr.is_finite() {
            return fail(EqStatus::InvalidParameter, format!("learning rate must be finite, got {lr}"));
        }
        let grads = [da, db, dc, dd];
        let names = ["dA", "dB", "dC", "dD"];
        let mut steps = Vec::with_capacity(4);
        for ((param, g), name) in core.parameters().iter().zip(grads).zip(names) {
            let g = slice(g, param.as_slice().len(), name)?;
            let (r, c) = param.shape();
            steps.push(Matrix::from_vec(r, c, g.to_vec())?);
        }
        for (param, g) in core.parameters_mut().into_iter().zip(&steps) {
            param.axpy(-lr, g)?;
        }
        core.apply_constraints();
        Ok(())
    })
}

/// Re-projects `A` onto the ∞-norm ball (and the strictly upper pattern without feedback).
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_model_apply_constraints(model: *mut EqModel) -> EqStatus {
    guard(|| {
        model_mut(model)?.model.apply_constraints();
        Ok(())
    })
}

/// `‖A‖_∞` of the core.
///
/// # Safety
/// `model` must be a live handle and `norm` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_model_inf_norm(model: *const EqModel, norm: *mut f64) -> EqStatus {
    guard(|| {
        let c = core(model_ref(model)?)?;
        if norm.is_null() {
            return fail(EqStatus::NullPointer, "norm is null");
        }
        *norm = c.a().inf_operator_norm();
        Ok(())
    })
}
