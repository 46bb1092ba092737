//! C interface to `densde`.
//!
//! Every function returns a [`DensdeStatus`]. On failure the message is kept
//! per thread and can be read with [`densde_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Panics never unwind into C; they become
//! [`DensdeStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use densde::error_metrics::{fit_rate, lm_omega_norm};
use densde::experiment::ScenarioSpec;
use densde::fpe_solver::{interpolate_density, solve_fpe_tagged, DensityPath, FpeConfig};
use densde::grid::GridSpec;
use densde::mollifier::{kde_at_points, MollifierKernel, ParticleEnsemble};
use densde::particle_system::{simulate, SimulationPlan};
use densde::stable_noise::{heat_kernel_grid, sample_stable_increment_into, StableNoiseConfig};
use densde::{Error, StreamFactory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnderResolved = 3,
    LengthMismatch = 4,
    NumericalFailure = 5,
    Io = 6,
    Panic = 7,
}

/// Mollifier, unscaled or scaled for a particle count.
pub struct DensdeKernel(MollifierKernel);

/// Particle positions on the torus.
pub struct DensdeEnsemble(ParticleEnsemble);

/// Reference solution of the nonlinear Fokker–Planck equation.
pub struct DensdeDensityPath(DensityPath);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DensdeRateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub theoretical_slope: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DensdeStatus {
    let mut e = err;
    while let Error::Context { source, .. } = e {
        e = source;
    }
    match e {
        Error::UnderResolved { .. } => DensdeStatus::UnderResolved,
        Error::LengthMismatch { .. } => DensdeStatus::LengthMismatch,
        Error::Io(_) => DensdeStatus::Io,
        _ if e.is_numerical() => DensdeStatus::NumericalFailure,
        _ => DensdeStatus::InvalidArgument,
    }
}

struct Null;

enum Failure {
    Lib(Error),
    Null,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<Null> for Failure {
    fn from(_: Null) -> Self {
        Failure::Null
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> DensdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DensdeStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            let s = status_of(&e);
            set_last_error(e.to_string());
            s
        }
        Ok(Err(Failure::Null)) => {
            set_last_error("null pointer argument".into());
            DensdeStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            DensdeStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Null> {
    p.as_ref().ok_or(Null)
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Null> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Null);
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn as_slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Null> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Null);
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), Null> {
    if p.is_null() {
        return Err(Null);
    }
    p.write(v);
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<(), Error> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn densde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn densde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes `count` increments of the isotropic `alpha`-stable process over
/// time `dt` into `out` (`count * dim` values), drawn from stream
/// `(seed, stream)`.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_sample_stable(
    alpha: f64,
    dim: usize,
    dt: f64,
    seed: u64,
    stream: u64,
    count: usize,
    out: *mut f64,
    out_len: usize,
) -> DensdeStatus {
    guard(|| {
        let cfg = StableNoiseConfig::new(alpha, dim)?;
        check_len(count.checked_mul(dim).ok_or_else(|| Error::invalid("count * dim overflows"))?, out_len)?;
        let out = as_slice_mut(out, out_len)?;
        let mut rng = StreamFactory::new(seed).particle(0, stream);
        for chunk in out.chunks_exact_mut(dim) {
            sample_stable_increment_into(&cfg, dt, &mut rng, chunk)?;
        }
        Ok(())
    })
}

/// Transition density at time `t` on the periodic grid with `n` points per
/// axis, centred at the origin node. `out_len` must be `n^dim`.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_heat_kernel(
    alpha: f64,
    dim: usize,
    t: f64,
    domain_length: f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> DensdeStatus {
    guard(|| {
        let cfg = StableNoiseConfig::new(alpha, dim)?;
        let spec = GridSpec::new(domain_length, n, dim)?;
        check_len(spec.len(), out_len)?;
        let field = heat_kernel_grid(&cfg, t, &spec)?;
        as_slice_mut(out, out_len)?.copy_from_slice(field.values());
        Ok(())
    })
}

/// Unit-mass bump of support radius `radius` in dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn densde_kernel_new(radius: f64, dim: usize, out: *mut *mut DensdeKernel) -> DensdeStatus {
    guard(|| {
        let k = MollifierKernel::bump(radius, dim)?;
        write(out, Box::into_raw(Box::new(DensdeKernel(k))))?;
        Ok(())
    })
}

/// `phi_N(x) = N^{theta d} phi(N^theta x)` from an unscaled kernel.
///
/// # Safety
/// `base` must be a live kernel handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn densde_kernel_scaled(
    base: *const DensdeKernel,
    n_particles: usize,
    theta: f64,
    out: *mut *mut DensdeKernel,
) -> DensdeStatus {
    guard(|| {
        let k = as_ref(base)?.0.scaled(n_particles, theta)?;
        write(out, Box::into_raw(Box::new(DensdeKernel(k))))?;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be a live handle, `y` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_kernel_eval(
    kernel: *const DensdeKernel,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> DensdeStatus {
    guard(|| {
        let k = &as_ref(kernel)?.0;
        check_len(k.dim(), dim)?;
        write(out, k.eval(as_slice(y, dim)?))?;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn densde_kernel_support_radius(kernel: *const DensdeKernel, out: *mut f64) -> DensdeStatus {
    guard(|| {
        write(out, as_ref(kernel)?.0.support_radius())?;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn densde_kernel_free(kernel: *mut DensdeKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Ensemble from `n * dim` row-major positions in `[0, L)^dim`.
///
/// # Safety
/// `positions` must point to `n * dim` doubles, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn densde_ensemble_new(
    positions: *const f64,
    n: usize,
    dim: usize,
    domain_length: f64,
    time: f64,
    out: *mut *mut DensdeEnsemble,
) -> DensdeStatus {
    guard(|| {
        let len = n.checked_mul(dim).ok_or_else(|| Error::invalid("n * dim overflows"))?;
        let pos = as_slice(positions, len)?.to_vec();
        let e = ParticleEnsemble::new(pos, dim, domain_length, time)?;
        write(out, Box::into_raw(Box::new(DensdeEnsemble(e))))?;
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn densde_ensemble_len(ensemble: *const DensdeEnsemble, n: *mut usize, dim: *mut usize) -> DensdeStatus {
    guard(|| {
        let e = &as_ref(ensemble)?.0;
        write(n, e.len())?;
        write(dim, e.dim())?;
        Ok(())
    })
}

/// Copies the positions out; `out_len` must be `N * dim`.
///
/// # Safety
/// `ensemble` must be a live handle, `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_ensemble_positions(
    ensemble: *const DensdeEnsemble,
    out: *mut f64,
    out_len: usize,
) -> DensdeStatus {
    guard(|| {
        let e = &as_ref(ensemble)?.0;
        check_len(e.positions().len(), out_len)?;
        as_slice_mut(out, out_len)?.copy_from_slice(e.positions());
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn densde_ensemble_free(ensemble: *mut DensdeEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Mollified empirical density at `n_queries` points (row-major, `dim` each).
///
/// # Safety
/// Handles must be live; `queries` and `out` must hold `n_queries * dim`
/// and `n_queries` doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_kde(
    ensemble: *const DensdeEnsemble,
    kernel: *const DensdeKernel,
    queries: *const f64,
    n_queries: usize,
    out: *mut f64,
) -> DensdeStatus {
    guard(|| {
        let e = &as_ref(ensemble)?.0;
        let k = &as_ref(kernel)?.0;
        let q = as_slice(queries, n_queries * e.dim())?;
        let v = kde_at_points(e, k, q)?;
        as_slice_mut(out, n_queries)?.copy_from_slice(&v);
        Ok(())
    })
}

unsafe fn scenario_of(name: *const c_char, domain_length: f64) -> Result<ScenarioSpec, Failure> {
    if name.is_null() {
        return Err(Failure::Null);
    }
    let name = CStr::from_ptr(name).to_str().map_err(|_| Error::invalid("scenario name is not UTF-8"))?;
    Ok(ScenarioSpec::lookup(name, domain_length)?)
}

/// Solves the limit equation of a registered scenario on `[0, L)` with
/// `grid_n` points up to `t_end`.
///
/// # Safety
/// `scenario` must be a NUL-terminated string, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn densde_solve_fpe(
    scenario: *const c_char,
    alpha: f64,
    domain_length: f64,
    grid_n: usize,
    dt_pde: f64,
    t_end: f64,
    out: *mut *mut DensdeDensityPath,
) -> DensdeStatus {
    guard(|| {
        let s = scenario_of(scenario, domain_length)?;
        let grid = GridSpec::new(domain_length, grid_n, s.dim)?;
        let cfg = FpeConfig {
            noise: StableNoiseConfig::new(alpha, s.dim)?,
            drift: s.drift.clone(),
            grid,
            dt_pde,
            t_end,
            dealias: true,
        };
        let rho0 = s.rho0.grid_field(&grid)?;
        let path = solve_fpe_tagged(&cfg, &rho0, s.name)?;
        write(out, Box::into_raw(Box::new(DensdeDensityPath(path))))?;
        Ok(())
    })
}

/// Number of stored times and values per field.
///
/// # Safety
/// `path` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn densde_density_path_shape(
    path: *const DensdeDensityPath,
    steps: *mut usize,
    field_len: *mut usize,
) -> DensdeStatus {
    guard(|| {
        let p = &as_ref(path)?.0;
        write(steps, p.times.len())?;
        write(field_len, p.spec().len())?;
        Ok(())
    })
}

/// Copies the field stored at index `step` and returns its time.
///
/// # Safety
/// `path` must be a live handle, `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_density_path_field(
    path: *const DensdeDensityPath,
    step: usize,
    time: *mut f64,
    out: *mut f64,
    out_len: usize,
) -> DensdeStatus {
    guard(|| {
        let p = &as_ref(path)?.0;
        let f = p
            .fields
            .get(step)
            .ok_or_else(|| Error::invalid(format!("step {step} out of range 0..{}", p.fields.len())))?;
        check_len(f.values().len(), out_len)?;
        as_slice_mut(out, out_len)?.copy_from_slice(f.values());
        write(time, p.times[step])?;
        Ok(())
    })
}

/// `rho_t(x)`, interpolated in time and space.
///
/// # Safety
/// `path` must be a live handle, `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_density_path_eval(
    path: *const DensdeDensityPath,
    t: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> DensdeStatus {
    guard(|| {
        let p = &as_ref(path)?.0;
        write(out, interpolate_density(p, t, as_slice(x, dim)?)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn densde_density_path_free(path: *mut DensdeDensityPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Runs one replication of the particle system of a registered scenario
/// and returns the ensemble at `t_end`.
///
/// # Safety
/// `scenario` must be a NUL-terminated string, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn densde_simulate(
    scenario: *const c_char,
    alpha: f64,
    theta: f64,
    n_particles: usize,
    dt: f64,
    t_end: f64,
    domain_length: f64,
    seed: u64,
    replication: u64,
    out: *mut *mut DensdeEnsemble,
) -> DensdeStatus {
    guard(|| {
        let s = scenario_of(scenario, domain_length)?;
        let plan = SimulationPlan {
            noise: StableNoiseConfig::new(alpha, s.dim)?,
            drift: s.drift.clone(),
            kernel: s.kernel()?.scaled(n_particles, theta)?,
            initial: s.rho0.clone(),
            n_particles,
            dt,
            t_end,
            domain_length,
            seed,
            replication,
            record_particle1_noise: false,
            snapshot_times: vec![t_end],
            stream_slots: None,
        };
        let mut result = simulate(&plan)?;
        let last = result.snapshots.pop().ok_or_else(|| Error::invalid("simulation produced no snapshot"))?;
        write(out, Box::into_raw(Box::new(DensdeEnsemble(last))))?;
        Ok(())
    })
}

/// `(mean v^m)^{1/m}` with a bootstrap standard error drawn from `seed`.
///
/// # Safety
/// `values` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn densde_lm_norm(
    values: *const f64,
    len: usize,
    m: u32,
    seed: u64,
    value: *mut f64,
    bootstrap_se: *mut f64,
) -> DensdeStatus {
    guard(|| {
        let mut rng = StreamFactory::new(seed).auxiliary(0, 0);
        let r = lm_omega_norm(as_slice(values, len)?, m, &mut rng)?;
        write(value, r.value)?;
        write(bootstrap_se, r.bootstrap_se)?;
        Ok(())
    })
}

/// Least-squares slope of `log(error)` against `log(N)`.
///
/// # Safety
/// `ns` and `errors` must point to `len` values each.
#[no_mangle]
pub unsafe extern "C" fn densde_fit_rate(
    ns: *const usize,
    errors: *const f64,
    len: usize,
    theoretical_slope: f64,
    out: *mut DensdeRateFit,
) -> DensdeStatus {
    guard(|| {
        let f = fit_rate(as_slice(ns, len)?, as_slice(errors, len)?, theoretical_slope)?;
        write(
            out,
            DensdeRateFit {
                slope: f.slope,
                intercept: f.intercept,
                r_squared: f.r_squared,
                n_points: f.n_points,
                theoretical_slope: f.theoretical_slope,
            },
        )?;
        Ok(())
    })
}
