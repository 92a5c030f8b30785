//! Closed-form constants, the two sphere integrals by quadrature, and the
//! Monte Carlo Lyapunov exponent `lambda* = 1 + lambda`.

use std::f64::consts::{FRAC_PI_2, LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::excursion::{estimate_hf_mc, HfParams};
use crate::geometry::{DomainGeometry, Vec3};
use crate::quadrature::{nested, Budget};

pub const QUADRATURE_BUDGET: u64 = 10_000_000;
pub const MIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    pub i1_exact: f64,
    pub i2_exact: f64,
    pub lambda_limit: f64,
    pub h_hat_f: f64,
}

pub fn closed_forms() -> ClosedForms {
    // log(1 + sqrt 2) = asinh(1), which avoids rounding 1 + sqrt 2 first
    let i1 = (SQRT_2 - 1.0) - 1f64.asinh();
    let i2 = LN_2 - 1.0;
    ClosedForms {
        i1_exact: i1,
        i2_exact: i2,
        lambda_limit: (SQRT_2 - 2.0) + (LN_2 - 1f64.asinh()),
        h_hat_f: i1,
    }
}

/// `log(1 - x) / x`, tending to -1 at 0.
fn log1m_over(x: f64) -> f64 {
    if x < 1e-8 {
        -1.0 - 0.5 * x
    } else {
        (-x).ln_1p() / x
    }
}

/// Integrand of the first integral over `alpha in (0, pi), beta in (0, pi/2)`
/// after the 4-fold beta reduction, without the `1/pi` prefactor.
/// Equals `4 pi` times the angular density times `f`, with the `alpha^-2`
/// blow-up cancelled analytically.
pub fn i1_integrand(alpha: f64, beta: f64) -> f64 {
    let (sb, sa) = (beta.sin(), alpha.sin());
    let c = (alpha / 2.0).cos();
    c * c * c * sb * sb * log1m_over(sa * sa * sb * sb)
}

/// Same reduction for the second integral: `sin(alpha) f(alpha, beta)`.
pub fn i2_integrand(alpha: f64, beta: f64) -> f64 {
    let (sb, sa) = (beta.sin(), alpha.sin());
    sa * 0.5 * (-(sa * sa * sb * sb)).ln_1p()
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol >= MIN_TOL) {
        return Err(invalid(format!("tol must be at least {MIN_TOL:e}, got {tol:e}")));
    }
    Ok(())
}

fn run(
    f: impl Fn(f64, f64) -> f64,
    inner: &[f64],
    outer: &[f64],
    prefactor: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    check_tol(tol)?;
    let budget = Budget::new(QUADRATURE_BUDGET);
    let r = nested(f, inner, outer, tol / prefactor, &budget);
    let value = prefactor * r.value;
    let error_estimate = prefactor * r.error;
    if !r.converged {
        return Err(Error::QuadratureBudget {
            tol,
            evaluations: budget.used(),
            estimate: value,
        });
    }
    Ok(QuadratureResult {
        value,
        error_estimate,
        evaluations: budget.used(),
    })
}

/// Breaks put the log singularity at `(pi/2, pi/2)` on panel corners.
const ALPHA_BREAKS: [f64; 3] = [0.0, FRAC_PI_2, PI];
const BETA_BREAKS: [f64; 2] = [0.0, FRAC_PI_2];

/// `int f d(endpoint law)` over the whole sphere in `(alpha, beta)`.
pub fn integral_i1(tol: f64) -> Result<QuadratureResult> {
    run(i1_integrand, &ALPHA_BREAKS, &BETA_BREAKS, 1.0 / PI, tol)
}

/// `int f d(uniform measure)` over the sphere in `(alpha, beta)`.
pub fn integral_i2(tol: f64) -> Result<QuadratureResult> {
    run(i2_integrand, &ALPHA_BREAKS, &BETA_BREAKS, 1.0 / PI, tol)
}

/// First integral in `u = cos(alpha)`, then `s = sqrt(1 - u)` to absorb the
/// `(1 - u)^-1/2` endpoint behaviour. The log singularity sits at `s = 1`.
pub fn integral_i1_cos(tol: f64) -> Result<QuadratureResult> {
    let f = |s: f64, beta: f64| {
        let sb2 = beta.sin().powi(2);
        let q = 2.0 - s * s;
        // log(cos^2 b + sin^2 b u^2) / s^2 with 1 - u^2 = s^2 (2 - s^2)
        2.0 * sb2 * q * log1m_over(sb2 * s * s * q)
    };
    run(f, &[0.0, 1.0, SQRT_2], &BETA_BREAKS, 1.0 / (8f64.sqrt() * PI), tol)
}

/// Second integral in `u = cos(alpha)`.
pub fn integral_i2_cos(tol: f64) -> Result<QuadratureResult> {
    let f = |u: f64, beta: f64| {
        let sb2 = beta.sin().powi(2);
        0.5 * (-(sb2 * (1.0 - u) * (1.0 + u))).ln_1p()
    };
    run(f, &[-1.0, 0.0, 1.0], &BETA_BREAKS, 1.0 / PI, tol)
}

/// Torus half-side, or `None` for exterior free space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho {
    Finite(f64),
    Infinite,
}

impl Rho {
    pub fn geometry(self) -> Result<DomainGeometry> {
        match self {
            Rho::Finite(r) => DomainGeometry::torus(r),
            Rho::Infinite => Ok(DomainGeometry::exterior()),
        }
    }

    pub fn as_option(self) -> Option<f64> {
        match self {
            Rho::Finite(r) => Some(r),
            Rho::Infinite => None,
        }
    }
}

impl std::fmt::Display for Rho {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rho::Finite(r) => write!(f, "{r}"),
            Rho::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Rho {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Rho::Infinite),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|r| r.is_finite())
                .map(Rho::Finite)
                .ok_or_else(|| invalid(format!("rho must be a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub lambda_star: f64,
    pub stderr: f64,
    pub rho: Rho,
    pub n_hit: usize,
    pub n_escape: usize,
    pub params: HfParams,
}

/// Base point and tangent direction used for every exponent estimate; the
/// value does not depend on them by symmetry.
pub fn reference_frame() -> (Vec3, Vec3) {
    (Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0))
}

/// Snaps `lambda` to the grid of `1 + lambda` (a shift below one ulp of 1) so
/// that `lambda_star - lambda == 1` holds exactly in floating point.
pub fn unit_offset(lambda: f64) -> (f64, f64) {
    let star = 1.0 + lambda;
    let snapped = star - 1.0;
    (snapped, 1.0 + snapped)
}

pub fn estimate_lambda(rho: Rho, params: &HfParams) -> Result<LyapunovEstimate> {
    let geom = rho.geometry()?;
    let (x, v) = reference_frame();
    let e = estimate_hf_mc(&x, &v, params, &geom)?;
    let (lambda, lambda_star) = unit_offset(e.mean);
    Ok(LyapunovEstimate {
        lambda,
        lambda_star,
        stderr: e.stderr,
        rho,
        n_hit: e.n_hit,
        n_escape: e.n_escape,
        params: *params,
    })
}
