//! C ABI for the sweep runner, the verification suite and the Kronecker
//! residual.
//!
//! Every function returns an [`AttnsepStatus`]; on failure the message is
//! available from [`attnsep_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::str::FromStr;

use attnsep::experiment::{
    run_sweep_with_threads, write_csv, Family, Param, SweepOutcome, SweepSpec,
};
use attnsep::verify::{run_verify, VerifyOptions};
use attnsep::{Error, Matrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttnsepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Shape = 4,
    Numeric = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttnsepFamily {
    Toy = 0,
    SelfIdentity = 1,
    SelfAllones = 2,
    Cross = 3,
}

impl From<AttnsepFamily> for Family {
    fn from(f: AttnsepFamily) -> Self {
        match f {
            AttnsepFamily::Toy => Family::Toy,
            AttnsepFamily::SelfIdentity => Family::SelfIdentity,
            AttnsepFamily::SelfAllones => Family::SelfAllones,
            AttnsepFamily::Cross => Family::Cross,
        }
    }
}

/// Opaque sweep description.
pub struct AttnsepSweepSpec {
    inner: SweepSpec,
}

/// Opaque sweep outcome.
pub struct AttnsepSweepResult {
    inner: SweepOutcome,
}

/// One aggregated sweep point.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AttnsepSweepRow {
    pub swept_value: f64,
    pub trials: u64,
    pub successes: u64,
    pub ratio: f64,
    pub fail_exp_d1: u64,
    pub fail_lin_d1: u64,
    pub fail_exp_d0: u64,
    pub fail_lin_d0: u64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: AttnsepStatus, msg: impl Into<String>) -> AttnsepStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> AttnsepStatus {
    match e {
        Error::Shape { .. } => AttnsepStatus::Shape,
        Error::DegenerateNormalizer { .. } | Error::NonFinite(_) => AttnsepStatus::Numeric,
        Error::InvalidConfig(_) | Error::OutOfRegime(_) | Error::EmptySweep => {
            AttnsepStatus::InvalidConfig
        }
        Error::Io { .. } | Error::Csv { .. } => AttnsepStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), AttnsepStatus>) -> AttnsepStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AttnsepStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(AttnsepStatus::Panic, "internal panic"),
    }
}

fn core(e: Error) -> AttnsepStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, AttnsepStatus> {
    if p.is_null() {
        return Err(fail(AttnsepStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            AttnsepStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, AttnsepStatus> {
    p.as_ref()
        .ok_or_else(|| fail(AttnsepStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, AttnsepStatus> {
    p.as_mut()
        .ok_or_else(|| fail(AttnsepStatus::NullPointer, format!("{what} is null")))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn attnsep_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a sweep over `param` (e.g. "n", "a1") with the family's defaults.
///
/// # Safety
/// `param` must be a NUL-terminated string, `values` must point to `len`
/// doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_spec_new(
    family: AttnsepFamily,
    param: *const c_char,
    values: *const f64,
    len: usize,
    out: *mut *mut AttnsepSweepSpec,
) -> AttnsepStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let name = c_str(param, "param")?;
        let param = Param::from_str(name)
            .map_err(|e| fail(AttnsepStatus::InvalidArgument, e.to_string()))?;
        if len > 0 && values.is_null() {
            return Err(fail(AttnsepStatus::NullPointer, "values is null"));
        }
        let values = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, len).to_vec()
        };
        let spec = SweepSpec::new(family.into(), param, values);
        *out = Box::into_raw(Box::new(AttnsepSweepSpec { inner: spec }));
        Ok(())
    })
}

/// Overrides one fixed parameter of the sweep.
///
/// # Safety
/// `spec` must come from `attnsep_sweep_spec_new`; `param` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_spec_set(
    spec: *mut AttnsepSweepSpec,
    param: *const c_char,
    value: f64,
) -> AttnsepStatus {
    guard(|| {
        let spec = deref_mut(spec, "spec")?;
        let name = c_str(param, "param")?;
        let param = Param::from_str(name)
            .map_err(|e| fail(AttnsepStatus::InvalidArgument, e.to_string()))?;
        spec.inner.fixed.set(param, value).map_err(core)
    })
}

/// # Safety
/// `spec` must come from `attnsep_sweep_spec_new`.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_spec_set_trials(
    spec: *mut AttnsepSweepSpec,
    trials: u64,
) -> AttnsepStatus {
    guard(|| {
        deref_mut(spec, "spec")?.inner.trials_per_point = trials as usize;
        Ok(())
    })
}

/// # Safety
/// `spec` must come from `attnsep_sweep_spec_new`.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_spec_set_seed(
    spec: *mut AttnsepSweepSpec,
    seed: u64,
) -> AttnsepStatus {
    guard(|| {
        deref_mut(spec, "spec")?.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `spec` must come from `attnsep_sweep_spec_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_spec_free(spec: *mut AttnsepSweepSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Runs the sweep on `threads` workers (0 = one per core).
///
/// # Safety
/// `spec` must come from `attnsep_sweep_spec_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_run(
    spec: *const AttnsepSweepSpec,
    threads: u32,
    out: *mut *mut AttnsepSweepResult,
) -> AttnsepStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let spec = deref(spec, "spec")?;
        let outcome = run_sweep_with_threads(&spec.inner, threads as usize).map_err(core)?;
        *out = Box::into_raw(Box::new(AttnsepSweepResult { inner: outcome }));
        Ok(())
    })
}

/// Number of sweep points that ran; 0 for NULL.
///
/// # Safety
/// `result` must come from `attnsep_sweep_run` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_result_len(result: *const AttnsepSweepResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.records.len())
}

/// Number of sweep points skipped for invalid configuration; 0 for NULL.
///
/// # Safety
/// `result` must come from `attnsep_sweep_run` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_result_skipped(result: *const AttnsepSweepResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.skipped.len())
}

/// # Safety
/// `result` must come from `attnsep_sweep_run`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_result_row(
    result: *const AttnsepSweepResult,
    index: usize,
    out: *mut AttnsepSweepRow,
) -> AttnsepStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let result = deref(result, "result")?;
        let r = result.inner.records.get(index).ok_or_else(|| {
            fail(
                AttnsepStatus::InvalidArgument,
                format!(
                    "row {index} out of range ({} rows)",
                    result.inner.records.len()
                ),
            )
        })?;
        *out = AttnsepSweepRow {
            swept_value: r.swept_value,
            trials: r.trials as u64,
            successes: r.successes as u64,
            ratio: r.ratio,
            fail_exp_d1: r.fail_exp_d1 as u64,
            fail_lin_d1: r.fail_lin_d1 as u64,
            fail_exp_d0: r.fail_exp_d0 as u64,
            fail_lin_d0: r.fail_lin_d0 as u64,
            seed: r.seed,
        };
        Ok(())
    })
}

/// Writes the result in the same CSV layout as the command-line tool.
///
/// # Safety
/// `result` must come from `attnsep_sweep_run`; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_result_write_csv(
    result: *const AttnsepSweepResult,
    path: *const c_char,
) -> AttnsepStatus {
    guard(|| {
        let result = deref(result, "result")?;
        let path = c_str(path, "path")?;
        write_csv(&result.inner.records, Path::new(path)).map_err(core)
    })
}

/// # Safety
/// `result` must come from `attnsep_sweep_run` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn attnsep_sweep_result_free(result: *mut AttnsepSweepResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Largest gap between `vec(exp(A1 X A2^T))` and `exp((A1 ⊗ A2) vec(X))`.
/// `a1` and `a2` are row-major `n x d`, `x` is row-major `d x d`.
///
/// # Safety
/// The input pointers must reference the stated number of doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn attnsep_tensor_trick_residual(
    a1: *const f64,
    a2: *const f64,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> AttnsepStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let read = |p: *const f64, rows: usize, what: &str| -> Result<Matrix, AttnsepStatus> {
            if p.is_null() && rows * d > 0 {
                return Err(fail(AttnsepStatus::NullPointer, format!("{what} is null")));
            }
            let data = if rows * d == 0 {
                Vec::new()
            } else {
                std::slice::from_raw_parts(p, rows * d).to_vec()
            };
            Matrix::from_vec(rows, d, data).map_err(core)
        };
        let (a1, a2, x) = (read(a1, n, "a1")?, read(a2, n, "a2")?, read(x, d, "x")?);
        *out = attnsep::attention::tensor_trick_residual(&a1, &a2, &x).map_err(core)?;
        Ok(())
    })
}

/// Runs the verification suite and reports how many cases passed.
///
/// # Safety
/// `passed` and `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn attnsep_verify(
    quick: bool,
    passed: *mut usize,
    total: *mut usize,
) -> AttnsepStatus {
    guard(|| {
        let passed = deref_mut(passed, "passed")?;
        let total = deref_mut(total, "total")?;
        let report = run_verify(&VerifyOptions { quick }).map_err(core)?;
        *total = report.cases.len();
        *passed = report.cases.iter().filter(|c| c.passed()).count();
        Ok(())
    })
}
