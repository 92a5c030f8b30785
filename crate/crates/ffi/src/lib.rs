//! C ABI over `rbm-lab`.
//!
//! Every function returns an [`RbmStatus`]; results go through out-pointers.
//! After a non-`Ok` status, [`rbm_last_error`] describes the failure on the
//! calling thread. Handles are opaque and must be released with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rbm_lab::excursion::{estimate_hf_mc, HfParams};
use rbm_lab::exponent::{closed_forms, integral_i1, integral_i2, QuadratureResult};
use rbm_lab::sde::{simulate, SimConfig, StoppingRule};
use rbm_lab::{DomainGeometry, Error, NoiseStream, Vec3};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    NotOnBoundary = 3,
    BudgetExceeded = 4,
    Degenerate = 5,
    Internal = 6,
}

/// Opaque domain: a flat torus with the unit-ball obstacle, or free space.
pub struct RbmGeometry {
    inner: DomainGeometry,
}

/// Opaque single-process simulator bound to a domain, step size and seed.
pub struct RbmSimulator {
    geom: DomainGeometry,
    cfg: SimConfig,
    seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbmClosedForms {
    pub i1_exact: f64,
    pub i2_exact: f64,
    pub lambda_limit: f64,
    pub h_hat_f: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbmQuadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbmHfEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_hit: u64,
    pub n_escape: u64,
    pub dt: f64,
}

/// How a simulation run stops.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmStop {
    /// Stop at time `value`.
    FixedTime = 0,
    /// Stop at the first boundary contact with local time `>= value`.
    LocalTime = 1,
    /// Stop at the first boundary contact (`value` is ignored).
    HitSphere = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbmState {
    pub position: [f64; 3],
    pub local_time: f64,
    pub clock: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RbmStatus {
    match e {
        Error::NotOnBoundary { .. } => RbmStatus::NotOnBoundary,
        Error::BudgetExceeded(_) | Error::QuadratureBudget { .. } => RbmStatus::BudgetExceeded,
        Error::DegenerateIncrement | Error::SingularPair => RbmStatus::Degenerate,
        _ => RbmStatus::InvalidArgument,
    }
}

struct Fail(RbmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RbmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RbmStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            RbmStatus::Internal
        }
    }
}

unsafe fn read3(p: *const f64, what: &str) -> Result<Vec3, Fail> {
    let s = unsafe { p.cast::<[f64; 3]>().as_ref() }.ok_or_else(|| null(what))?;
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn geom<'a>(g: *const RbmGeometry) -> Result<&'a DomainGeometry, Fail> {
    unsafe { g.as_ref() }.map(|g| &g.inner).ok_or_else(|| null("geometry"))
}

fn write3(dst: &mut [f64; 3], v: &Vec3) {
    *dst = [v.x, v.y, v.z];
}

/// Message for the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Torus of half side `rho > 1` around the unit ball.
///
/// # Safety
/// `out` must be null or valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rbm_geometry_torus(rho: f64, out: *mut *mut RbmGeometry) -> RbmStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        *dst = ptr::null_mut();
        let inner = DomainGeometry::torus(rho)?;
        *dst = Box::into_raw(Box::new(RbmGeometry { inner }));
        Ok(())
    })
}

/// Free space outside the unit ball.
///
/// # Safety
/// `out` must be null or valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rbm_geometry_exterior(out: *mut *mut RbmGeometry) -> RbmStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        *dst = Box::into_raw(Box::new(RbmGeometry { inner: DomainGeometry::exterior() }));
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle from `rbm_geometry_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rbm_geometry_free(g: *mut RbmGeometry) {
    if !g.is_null() {
        drop(unsafe { Box::from_raw(g) });
    }
}

/// Reduces `raw` to the canonical cell `[-rho, rho)^3` (identity in free space).
///
/// # Safety
/// `raw` and `out` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn rbm_canonicalize(g: *const RbmGeometry, raw: *const f64, out: *mut f64) -> RbmStatus {
    guard(|| {
        let g = unsafe { geom(g) }?;
        let p = g.canonicalize(unsafe { read3(raw, "raw") }?)?;
        write3(unsafe { self::out(out.cast::<[f64; 3]>(), "out") }?, &p.coords());
        Ok(())
    })
}

/// Minimal-image representative of `x - y`.
///
/// # Safety
/// `x`, `y` and `out` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn rbm_min_image_diff(
    g: *const RbmGeometry,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> RbmStatus {
    guard(|| {
        let g = unsafe { geom(g) }?;
        let x = g.canonicalize(unsafe { read3(x, "x") }?)?;
        let y = g.canonicalize(unsafe { read3(y, "y") }?)?;
        let d = g.min_image_diff(&x, &y)?;
        write3(unsafe { self::out(out.cast::<[f64; 3]>(), "out") }?, &d.components());
        Ok(())
    })
}

/// Flat distance between `x` and `y` (ignoring the obstacle).
///
/// # Safety
/// `x` and `y` must point to three doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn rbm_geodesic_dist(
    g: *const RbmGeometry,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> RbmStatus {
    guard(|| {
        let g = unsafe { geom(g) }?;
        let x = g.canonicalize(unsafe { read3(x, "x") }?)?;
        let y = g.canonicalize(unsafe { read3(y, "y") }?)?;
        *unsafe { self::out(out, "out") }? = g.geodesic_dist(&x, &y)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rbm_closed_forms(out: *mut RbmClosedForms) -> RbmStatus {
    guard(|| {
        let c = closed_forms();
        *unsafe { self::out(out, "out") }? = RbmClosedForms {
            i1_exact: c.i1_exact,
            i2_exact: c.i2_exact,
            lambda_limit: c.lambda_limit,
            h_hat_f: c.h_hat_f,
        };
        Ok(())
    })
}

fn quad_out(r: QuadratureResult) -> RbmQuadrature {
    RbmQuadrature { value: r.value, error_estimate: r.error_estimate, evaluations: r.evaluations }
}

/// Adaptive quadrature of the first angular integral to absolute tolerance `tol`.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rbm_integral_i1(tol: f64, out: *mut RbmQuadrature) -> RbmStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        *dst = quad_out(integral_i1(tol)?);
        Ok(())
    })
}

/// Adaptive quadrature of the second angular integral.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rbm_integral_i2(tol: f64, out: *mut RbmQuadrature) -> RbmStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        *dst = quad_out(integral_i2(tol)?);
        Ok(())
    })
}

/// Monte Carlo estimate of the excursion-law integral of the projection
/// observable at boundary point `x` with unit tangent `v`. The step size is
/// `(delta / 30)^2`; `far_radius` applies in free space only.
///
/// # Safety
/// `x` and `v` must point to three doubles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rbm_estimate_hf(
    g: *const RbmGeometry,
    x: *const f64,
    v: *const f64,
    delta: f64,
    far_radius: f64,
    n: u64,
    seed: u64,
    threads: u32,
    out: *mut RbmHfEstimate,
) -> RbmStatus {
    guard(|| {
        let g = unsafe { geom(g) }?;
        let (x, v) = unsafe { (read3(x, "x")?, read3(v, "v")?) };
        let dst = unsafe { self::out(out, "out") }?;
        let n = usize::try_from(n).map_err(|_| Fail(RbmStatus::InvalidArgument, "n too large".into()))?;
        let p = HfParams { delta, far_radius, n, seed, threads: threads.max(1) as usize, ..HfParams::default() };
        let e = estimate_hf_mc(&x, &v, &p, g)?;
        *dst = RbmHfEstimate { mean: e.mean, stderr: e.stderr, n_hit: e.n_hit as u64, n_escape: e.n_escape as u64, dt: e.dt };
        Ok(())
    })
}

/// Simulator on a copy of `g` with Euler step `dt` and master seed `seed`.
///
/// # Safety
/// `g` must be a live geometry handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rbm_simulator_new(
    g: *const RbmGeometry,
    dt: f64,
    seed: u64,
    out: *mut *mut RbmSimulator,
) -> RbmStatus {
    guard(|| {
        let geom = *unsafe { geom(g) }?;
        let dst = unsafe { self::out(out, "out") }?;
        *dst = ptr::null_mut();
        let cfg = SimConfig::with_dt(dt);
        cfg.validate()?;
        *dst = Box::into_raw(Box::new(RbmSimulator { geom, cfg, seed }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from `rbm_simulator_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rbm_simulator_free(s: *mut RbmSimulator) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Runs one reflected path from `x0` on noise stream `stream` until `stop`.
/// Equal `(seed, stream)` pairs give bit-identical results.
///
/// # Safety
/// `s` must be a live simulator, `x0` must point to three doubles and `out`
/// must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rbm_simulator_run(
    s: *const RbmSimulator,
    x0: *const f64,
    stream: u64,
    stop: RbmStop,
    value: f64,
    out: *mut RbmState,
) -> RbmStatus {
    guard(|| {
        let sim = unsafe { s.as_ref() }.ok_or_else(|| null("simulator"))?;
        let x0 = unsafe { read3(x0, "x0") }?;
        let dst = unsafe { self::out(out, "out") }?;
        let rule = match stop {
            RbmStop::FixedTime => StoppingRule::FixedTime(value),
            RbmStop::LocalTime => StoppingRule::LocalTimeX(value),
            RbmStop::HitSphere => StoppingRule::HitSphere,
        };
        let r = simulate(x0, NoiseStream::new(sim.seed, stream), &[rule], &sim.geom, &sim.cfg)?;
        let p = r.state.position.coords();
        *dst = RbmState { position: [p.x, p.y, p.z], local_time: r.state.local_time, clock: r.state.clock };
        Ok(())
    })
}
