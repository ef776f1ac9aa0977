//! C ABI over the `tscm` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`TscmStatus`]; on failure, [`tscm_last_error`] describes what went wrong
//! on the calling thread. Panics never unwind into C: they are reported as
//! [`TscmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tscm::data::{preset, Experiment, ExperimentPreset, RunResult};
use tscm::forward::MeasurementSet;
use tscm::tscm::StopReason;
use tscm::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TscmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownPreset = 3,
    Parse = 4,
    Io = 5,
    Solver = 6,
    IndexOutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TscmMethod {
    /// Topology-to-shape continuation.
    Continuation = 0,
    /// Plain level-set descent from the preset's initial guess.
    LevelSet = 1,
}

/// Why an inner loop stopped; mirrors the run log.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TscmStop {
    Converged = 0,
    StepBelowTau2 = 1,
    HalvingCap = 2,
    IterationCap = 3,
}

/// A preset plus the meshes and forward model built from it.
pub struct TscmExperiment {
    preset: ExperimentPreset,
    built: Option<Experiment>,
}

pub struct TscmMeasurements(MeasurementSet);

pub struct TscmRun(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> TscmStatus {
    match e {
        _ if e.is_solver_failure() => TscmStatus::Solver,
        Error::UnknownPreset(_) => TscmStatus::UnknownPreset,
        Error::Parse { .. } | Error::Version { .. } => TscmStatus::Parse,
        Error::Io(_) => TscmStatus::Io,
        Error::IndexMismatch(_) | Error::UnknownArc { .. } => TscmStatus::IndexOutOfRange,
        _ => TscmStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (TscmStatus, String)>) -> TscmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TscmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TscmStatus::Panic
        }
    }
}

type Res<T> = Result<T, (TscmStatus, String)>;

fn lib<T>(r: tscm::Result<T>) -> Res<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (TscmStatus, String) {
    (TscmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TscmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Res<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

impl TscmExperiment {
    fn built(&mut self) -> Res<&Experiment> {
        if self.built.is_none() {
            self.built = Some(lib(Experiment::new(self.preset.clone()))?);
        }
        Ok(self.built.as_ref().expect("just built"))
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tscm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tscm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an experiment from a named preset.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_experiment_from_preset(
    name: *const c_char,
    out: *mut *mut TscmExperiment,
) -> TscmStatus {
    guard(|| {
        let p = lib(preset(cstr(name, "name")?))?;
        let h = Box::into_raw(Box::new(TscmExperiment {
            preset: p,
            built: None,
        }));
        put(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Creates an experiment from the text of a preset file.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_experiment_from_toml(
    text: *const c_char,
    out: *mut *mut TscmExperiment,
) -> TscmStatus {
    guard(|| {
        let p = lib(ExperimentPreset::from_toml(cstr(text, "text")?))?;
        let h = Box::into_raw(Box::new(TscmExperiment {
            preset: p,
            built: None,
        }));
        put(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Applies a `section.key=value` override. Invalidates nothing the caller
/// holds: measurements and runs made earlier stay valid.
///
/// # Safety
/// `exp` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tscm_experiment_set(
    exp: *mut TscmExperiment,
    assignment: *const c_char,
) -> TscmStatus {
    guard(|| {
        let e = as_mut(exp, "exp")?;
        lib(e.preset.apply_override(cstr(assignment, "assignment")?))?;
        e.built = None;
        Ok(())
    })
}

/// Number of nodes of the inversion mesh (builds the mesh if needed).
///
/// # Safety
/// `exp` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_experiment_n_nodes(
    exp: *mut TscmExperiment,
    out: *mut usize,
) -> TscmStatus {
    guard(|| {
        let n = as_mut(exp, "exp")?.built()?.mesh().n_nodes();
        put(out, n, "out")
    })
}

/// Frees an experiment. Null is ignored.
///
/// # Safety
/// `exp` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tscm_experiment_free(exp: *mut TscmExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Synthesizes noisy measurements of the experiment's phantom.
///
/// # Safety
/// `exp` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_synthesize(
    exp: *mut TscmExperiment,
    rho: f64,
    seed: u64,
    out: *mut *mut TscmMeasurements,
) -> TscmStatus {
    guard(|| {
        let m = lib(as_mut(exp, "exp")?.built()?.synthesize(rho, seed))?;
        let h = Box::into_raw(Box::new(TscmMeasurements(m)));
        put(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Frees measurements. Null is ignored.
///
/// # Safety
/// `m` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tscm_measurements_free(m: *mut TscmMeasurements) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs an inversion of `data` with the experiment's settings.
///
/// # Safety
/// `exp` and `data` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn tscm_run(
    exp: *mut TscmExperiment,
    data: *const TscmMeasurements,
    method: TscmMethod,
    out: *mut *mut TscmRun,
) -> TscmStatus {
    guard(|| {
        let data = &as_ref(data, "data")?.0;
        let e = as_mut(exp, "exp")?.built()?;
        let r = lib(match method {
            TscmMethod::Continuation => e.run_tscm(data),
            TscmMethod::LevelSet => e.run_lsm(data),
        })?;
        let h = Box::into_raw(Box::new(TscmRun(r)));
        put(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Relative L2 conductivity error of the final iterate.
///
/// # Safety
/// `run` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_run_error(run: *const TscmRun, out: *mut f64) -> TscmStatus {
    guard(|| put(out, as_ref(run, "run")?.0.error, "out"))
}

/// Total number of accepted steps over all stages.
///
/// # Safety
/// `run` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_run_iterations(run: *const TscmRun, out: *mut usize) -> TscmStatus {
    guard(|| put(out, as_ref(run, "run")?.0.log.total_iterations(), "out"))
}

/// Number of continuation stages.
///
/// # Safety
/// `run` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_run_n_stages(run: *const TscmRun, out: *mut usize) -> TscmStatus {
    guard(|| put(out, as_ref(run, "run")?.0.log.stages.len(), "out"))
}

/// Stage `index`: its `lambda`, accepted steps and stop reason.
///
/// # Safety
/// `run` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tscm_run_stage(
    run: *const TscmRun,
    index: usize,
    lambda: *mut f64,
    iters: *mut usize,
    stop: *mut TscmStop,
) -> TscmStatus {
    guard(|| {
        let stages = &as_ref(run, "run")?.0.log.stages;
        let s = stages.get(index).ok_or_else(|| {
            (
                TscmStatus::IndexOutOfRange,
                format!("stage {index} of {}", stages.len()),
            )
        })?;
        let code = match s.stop {
            StopReason::Converged => TscmStop::Converged,
            StopReason::StepBelowTau2 => TscmStop::StepBelowTau2,
            StopReason::HalvingCap => TscmStop::HalvingCap,
            StopReason::IterationCap => TscmStop::IterationCap,
        };
        put(lambda, s.lambda, "lambda")?;
        put(iters, s.iters, "iters")?;
        put(stop, code, "stop")
    })
}

/// Copies the final nodal conductivity into `buf`, which must hold exactly
/// `len` = number of mesh nodes values.
///
/// # Safety
/// `run` must come from this library and `buf` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tscm_run_sigma(
    run: *const TscmRun,
    buf: *mut f64,
    len: usize,
) -> TscmStatus {
    guard(|| {
        let sigma = as_ref(run, "run")?.0.state.sigma().values();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != sigma.len() {
            return Err((
                TscmStatus::IndexOutOfRange,
                format!("buffer holds {len} values, field has {}", sigma.len()),
            ));
        }
        ptr::copy_nonoverlapping(sigma.as_ptr(), buf, len);
        Ok(())
    })
}

/// Frees a run. Null is ignored.
///
/// # Safety
/// `run` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tscm_run_free(run: *mut TscmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs the numerical self-checks; `passed` receives 1 if all pass.
///
/// # Safety
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tscm_verify(passed: *mut i32) -> TscmStatus {
    guard(|| {
        let report = lib(tscm::verify::run_all())?;
        put(passed, i32::from(report.passed()), "passed")
    })
}
