//! C ABI over the hybrid solver.
//!
//! Solvers are opaque handles created from a scene file and released with
//! `hr_solver_free`. Every fallible call returns an `HrStatus`; the message
//! of the last failure on the calling thread is available through
//! `hr_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hybrid_rad::harness::{self, MonopoleTest, SceneConfig, SceneSource};
use hybrid_rad::hybrid::SolverState;
use hybrid_rad::mesh::TriangleMesh;
use hybrid_rad::{Error, Vec3};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Geometry = 6,
    Numerical = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HrStatus {
    match e {
        Error::Io { .. } => HrStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => HrStatus::Parse,
        Error::InvalidMesh(_)
        | Error::DegenerateTriangle { .. }
        | Error::ElementOutsideDomain { .. }
        | Error::ElementInAbsorbingLayer { .. }
        | Error::PointOutsideInterior(_)
        | Error::SingularPoint { .. }
        | Error::CoincidentPoints => HrStatus::Geometry,
        Error::SingularSystem(_) | Error::ComplexResidue(_) | Error::ZeroReference => HrStatus::Numerical,
        Error::LengthMismatch { .. } => HrStatus::InvalidArgument,
        _ => HrStatus::Config,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HrStatus, String)>) -> HrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside hybrid-rad".into());
            HrStatus::Panic
        }
    }
}

fn lift<T>(r: hybrid_rad::Result<T>) -> Result<T, (HrStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (HrStatus, String) {
    (HrStatus::NullPointer, format!("{what} is null"))
}

/// Opaque solver handle.
pub struct HrSolver {
    state: SolverState,
    source: SceneSource,
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Largest stable time step `h / (c sqrt 3)`.
#[no_mangle]
pub extern "C" fn hr_cfl_timestep(h: f64, c: f64) -> f64 {
    hybrid_rad::farfield::cfl_timestep(h, c)
}

/// Signal-to-noise ratio in dB of `pred` against `truth`, both of length `n`.
///
/// # Safety
/// `pred` and `truth` must point to `n` readable doubles; `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn hr_snr(pred: *const f64, truth: *const f64, n: usize, out: *mut f64) -> HrStatus {
    guard(|| {
        if pred.is_null() || truth.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let p = std::slice::from_raw_parts(pred, n);
        let t = std::slice::from_raw_parts(truth, n);
        *out = lift(harness::snr(p, t))?;
        Ok(())
    })
}

/// Create a solver from a JSON scene file. Listeners of the scene are
/// registered in order.
///
/// # Safety
/// `scene_path` must be a NUL-terminated string; `out` must point to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_from_scene(scene_path: *const c_char, out: *mut *mut HrSolver) -> HrStatus {
    guard(|| {
        if scene_path.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(scene_path)
            .to_str()
            .map_err(|_| (HrStatus::InvalidArgument, "scene path is not UTF-8".to_string()))?;
        let path = Path::new(path);
        let cfg = lift(SceneConfig::load(path))?;
        let prepared = lift(cfg.prepare(path.parent().unwrap_or(Path::new(""))))?;
        let source = lift(prepared.source(None))?;
        let mut state = lift(SolverState::new(
            prepared.mesh.boundary_elements(),
            prepared.spec.clone(),
            prepared.solver.clone(),
        ))?;
        for x in &cfg.listeners {
            lift(state.add_listener(Vec3::from(*x)))?;
        }
        *out = Box::into_raw(Box::new(HrSolver { state, source }));
        Ok(())
    })
}

/// Advance `steps` steps.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_step(solver: *mut HrSolver, steps: usize) -> HrStatus {
    guard(|| {
        let s = solver.as_mut().ok_or_else(|| null("solver"))?;
        let drive = lift(s.source.as_source())?;
        for _ in 0..steps {
            lift(s.state.step(drive.as_ref()))?;
        }
        Ok(())
    })
}

/// Time step in seconds, or NaN for a null handle.
///
/// # Safety
/// `solver` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_tau(solver: *const HrSolver) -> f64 {
    solver.as_ref().map_or(f64::NAN, |s| s.state.tau())
}

/// Number of boundary elements after refinement (0 for a null handle).
///
/// # Safety
/// `solver` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_num_elements(solver: *const HrSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.state.elements.len())
}

/// Steps completed so far (0 for a null handle).
///
/// # Safety
/// `solver` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_steps(solver: *const HrSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.state.step_index())
}

/// Pressure at `(x, y, z)` for the last completed step.
///
/// # Safety
/// `solver` must be a live handle; `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_listener_pressure(
    solver: *mut HrSolver,
    x: f64,
    y: f64,
    z: f64,
    out: *mut f64,
) -> HrStatus {
    guard(|| {
        let s = solver.as_mut().ok_or_else(|| null("solver"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(s.state.listener_pressure(&Vec3::new(x, y, z)))?;
        Ok(())
    })
}

/// Copy the recorded series of listener `index` into `buf` (up to `len`
/// samples). `written` receives the number of samples copied.
///
/// # Safety
/// `solver` must be a live handle; `buf` must hold `len` doubles; `written`
/// must point to a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_listener_samples(
    solver: *const HrSolver,
    index: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> HrStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        if buf.is_null() || written.is_null() {
            return Err(null("buffer"));
        }
        let tap = s.state.listeners.get(index).ok_or_else(|| {
            (
                HrStatus::InvalidArgument,
                format!("listener {index} out of range ({})", s.state.listeners.len()),
            )
        })?;
        let n = tap.samples.len().min(len);
        std::ptr::copy_nonoverlapping(tap.samples.as_ptr(), buf, n);
        *written = n;
        Ok(())
    })
}

/// Copy the current Dirichlet values (one per element) into `buf`, which
/// must hold exactly `hr_solver_num_elements` doubles.
///
/// # Safety
/// `solver` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_dirichlet(solver: *const HrSolver, buf: *mut f64, len: usize) -> HrStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let phi = s.state.dirichlet();
        if len != phi.len() {
            return Err((
                HrStatus::InvalidArgument,
                format!("buffer holds {len} values, solver has {} elements", phi.len()),
            ));
        }
        std::ptr::copy_nonoverlapping(phi.as_ptr(), buf, len);
        Ok(())
    })
}

/// Release a solver. Null is ignored.
///
/// # Safety
/// `solver` must be null or a handle from `hr_solver_from_scene` that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn hr_solver_free(solver: *mut HrSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Monopole accuracy test on an icosphere with `subdivisions` levels.
/// Writes the aggregate SNR in dB to `out_snr`.
///
/// # Safety
/// `out_snr` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn hr_monopole_test(
    subdivisions: usize,
    resolution: usize,
    frequency: f64,
    out_snr: *mut f64,
) -> HrStatus {
    guard(|| {
        if out_snr.is_null() {
            return Err(null("out_snr"));
        }
        let mesh = TriangleMesh::icosphere(Vec3::zeros(), 1.0, subdivisions);
        let report = lift(harness::monopole_test(&MonopoleTest::new(mesh, resolution, frequency)))?;
        *out_snr = report.aggregate_snr_db;
        Ok(())
    })
}
