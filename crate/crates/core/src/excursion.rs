//! Excursion-law observables for the unit sphere.
//!
//! Angular coordinates of an endpoint `y` relative to a start point `x` and a
//! unit tangent vector `v` at `x`:
//!
//! ```text
//! y = cos(alpha) x + sin(alpha) (cos(beta) w + sin(beta) v),   w = x × v
//! ```
//!
//! so that `|pi_y(v)|^2 = cos^2 beta + sin^2 beta cos^2 alpha`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{inward_normal, project_with_normal, DomainGeometry, Vec3};
use crate::noise::{NoiseSource, NoiseStream};
use crate::sde::{first_hit_with, FarField, HitOutcome, SimConfig, DEFAULT_JUMP_THRESHOLD};
use crate::stats::{fan_out, ks_critical_1pct, ks_statistic, MeanEstimate};

pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_FAR_RADIUS: f64 = 64.0;
/// `sqrt(dt) = delta / DT_DIVISOR` unless a step size is given explicitly.
pub const DT_DIVISOR: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleCoords {
    pub alpha: f64,
    pub beta: f64,
}

impl AngleCoords {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Chord length `|x - y| = 2 sin(alpha / 2)`.
    pub fn chord(&self) -> f64 {
        2.0 * (self.alpha / 2.0).sin()
    }
}

fn check_unit_sphere(p: &Vec3) -> Result<Vec3> {
    inward_normal(p)
}

/// Density of the excursion endpoint law relative to the uniform probability
/// on the sphere: `2 |x - y|^-3`.
pub fn endpoint_density(x: &Vec3, y: &Vec3) -> Result<f64> {
    let x = check_unit_sphere(x)?;
    let y = check_unit_sphere(y)?;
    let d = (x - y).norm();
    if d == 0.0 {
        return Err(Error::SingularPair);
    }
    Ok(2.0 / (d * d * d))
}

/// Endpoint density in `(alpha, beta)`: `sin(alpha) sin(alpha/2)^-3 / (16 pi)`.
pub fn angle_density(a: AngleCoords) -> Result<f64> {
    if !(a.alpha > 0.0 && a.alpha <= PI) {
        return Err(invalid(format!("alpha must lie in (0, pi], got {}", a.alpha)));
    }
    let h = (a.alpha / 2.0).sin();
    Ok(a.alpha.sin() / (h * h * h) / (16.0 * PI))
}

/// `log |pi_y(v)| - log |v|` in angular form; `-inf` on the singular circle.
pub fn f_value(a: AngleCoords) -> f64 {
    let (sb, ca) = (a.beta.sin(), a.alpha.cos());
    let cb = a.beta.cos();
    // cos of the nearest double to pi/2 is ~6e-17, not zero
    if cb.abs() < f64::EPSILON && ca.abs() < f64::EPSILON {
        return f64::NEG_INFINITY;
    }
    0.5 * (cb * cb + sb * sb * ca * ca).ln()
}

/// The same observable evaluated from an endpoint on the sphere.
pub fn f_at_endpoint(y: &Vec3, v: &Vec3) -> Result<f64> {
    let n = check_unit_sphere(y)?;
    let vv = v.norm_squared();
    if vv == 0.0 {
        return Err(invalid("projection observable needs a non-zero vector"));
    }
    let p = project_with_normal(&n, v);
    Ok(0.5 * (p.norm_squared() / vv).ln())
}

fn tangent_frame(x: &Vec3, v: &Vec3) -> Result<(Vec3, Vec3, Vec3)> {
    let n = check_unit_sphere(x)?;
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("v must be a unit vector, |v| = {}", v.norm())));
    }
    if n.dot(v).abs() > 1e-9 {
        return Err(invalid(format!(
            "v must be tangent at x, <v, n> = {}",
            n.dot(v)
        )));
    }
    Ok((n, *v, n.cross(v)))
}

pub fn angles_of(x: &Vec3, v: &Vec3, y: &Vec3) -> Result<AngleCoords> {
    let (n, v, w) = tangent_frame(x, v)?;
    let y = check_unit_sphere(y)?;
    let c = n.dot(&y).clamp(-1.0, 1.0);
    let t = y - n * c;
    let alpha = (t.norm()).atan2(c);
    let beta = if t.norm() == 0.0 {
        0.0
    } else {
        t.dot(&v).atan2(t.dot(&w)).rem_euclid(TAU)
    };
    Ok(AngleCoords { alpha, beta })
}

pub fn point_from_angles(x: &Vec3, v: &Vec3, a: AngleCoords) -> Result<Vec3> {
    let (n, v, w) = tangent_frame(x, v)?;
    Ok(n * a.alpha.cos() + (w * a.beta.cos() + v * a.beta.sin()) * a.alpha.sin())
}

/// `(1 - cos alpha)^(-1/2)`, the antiderivative of the angular density in
/// `u = cos alpha` up to a constant factor.
fn inv_sqrt_one_minus_cos(alpha: f64) -> f64 {
    let h = (alpha / 2.0).sin();
    1.0 / (SQRT_2 * h)
}

fn alpha_min(eps_cut: f64) -> f64 {
    2.0 * (eps_cut / 2.0).asin()
}

/// CDF of `alpha` under the endpoint law restricted to chords `>= eps_cut`.
pub fn truncated_alpha_cdf(eps_cut: f64, alpha: f64) -> f64 {
    let lo = alpha_min(eps_cut);
    if alpha <= lo {
        return 0.0;
    }
    if alpha >= PI {
        return 1.0;
    }
    let top = inv_sqrt_one_minus_cos(lo);
    let bottom = FRAC_1_SQRT_2;
    if top <= bottom {
        return 1.0;
    }
    (top - inv_sqrt_one_minus_cos(alpha)) / (top - bottom)
}

/// Total endpoint-law mass of chords `>= eps_cut`: `1/eps_cut - 1/2`.
pub fn truncated_mass(eps_cut: f64) -> f64 {
    1.0 / eps_cut - 0.5
}

/// Draws an endpoint from the endpoint law restricted to chords `>= eps_cut`.
pub fn sample_truncated_endpoint(eps_cut: f64, rng: &mut NoiseSource) -> Result<AngleCoords> {
    if !(eps_cut > 0.0 && eps_cut <= 2.0) {
        return Err(invalid(format!("eps_cut must lie in (0, 2], got {eps_cut}")));
    }
    let top = inv_sqrt_one_minus_cos(alpha_min(eps_cut));
    let u = rng.uniform();
    let beta = TAU * rng.uniform();
    // invert the closed-form CDF: (1 - cos alpha)^(-1/2) = top - u (top - 1/sqrt 2)
    let b = (top - u * (top - FRAC_1_SQRT_2)).max(FRAC_1_SQRT_2);
    let half_sin = (1.0 / (SQRT_2 * b)).min(1.0);
    Ok(AngleCoords {
        alpha: 2.0 * half_sin.asin(),
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionSample {
    pub start: Vec3,
    pub outcome: HitOutcome,
    pub f_value: f64,
    pub delta: f64,
}

/// Excursion sampling setup: start offset, step size, far radius and the
/// Monte Carlo fan-out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfParams {
    pub delta: f64,
    /// Euler step near the sphere; `None` means `(delta / 30)^2`.
    pub dt: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub threads: usize,
    /// Escape radius in exterior free space (ignored on the torus).
    pub far_radius: f64,
    pub max_steps: u64,
}

impl Default for HfParams {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            dt: None,
            n: 1_000_000,
            seed: 0,
            threads: 1,
            far_radius: DEFAULT_FAR_RADIUS,
            max_steps: crate::sde::DEFAULT_MAX_STEPS,
        }
    }
}

impl HfParams {
    pub fn resolved_dt(&self) -> f64 {
        self.dt
            .unwrap_or((self.delta / DT_DIVISOR) * (self.delta / DT_DIVISOR))
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.resolved_dt(),
            far_field: FarField::SphereWalk {
                threshold: DEFAULT_JUMP_THRESHOLD,
            },
            max_steps: self.max_steps,
            record_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {}", self.delta)));
        }
        let dt = self.resolved_dt();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if dt.sqrt() > self.delta / 10.0 {
            return Err(invalid(format!(
                "dt = {dt:e} too coarse for delta = {:e}: need sqrt(dt) <= delta/10",
                self.delta
            )));
        }
        if self.n == 0 {
            return Err(invalid("number of runs N must be positive"));
        }
        if !(self.far_radius > 1.0 + self.delta) {
            return Err(invalid("far radius must exceed 1 + delta"));
        }
        Ok(())
    }

    fn far(&self, geom: &DomainGeometry) -> Option<f64> {
        (!geom.is_torus()).then_some(self.far_radius)
    }
}

/// One excursion started at `x + delta n(x)`.
pub fn sample_excursion(
    x: &Vec3,
    v: &Vec3,
    params: &HfParams,
    noise: NoiseStream,
    geom: &DomainGeometry,
) -> Result<ExcursionSample> {
    let (n, v, _) = tangent_frame(x, v)?;
    let start = n * (1.0 + params.delta);
    let mut src = noise.source();
    let outcome = first_hit_with(start, &mut src, params.far(geom), geom, &params.sim_config())?;
    let f_value = match outcome {
        HitOutcome::Hit(y) => f_at_endpoint(&y, &v)?,
        HitOutcome::Escaped => 0.0,
    };
    Ok(ExcursionSample {
        start,
        outcome,
        f_value,
        delta: params.delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_hit: usize,
    pub n_escape: usize,
    pub delta: f64,
    pub dt: f64,
}

/// Monte Carlo estimate of the excursion-law integral of `f_v`:
/// `(1/delta) E[f_v(endpoint)]` over excursions started at `x + delta n(x)`.
pub fn estimate_hf_mc(
    x: &Vec3,
    v: &Vec3,
    params: &HfParams,
    geom: &DomainGeometry,
) -> Result<HfEstimate> {
    params.validate()?;
    tangent_frame(x, v)?;
    let runs = fan_out(params.n, params.threads, |i| {
        sample_excursion(x, v, params, NoiseStream::replica(params.seed, i as u64), geom)
    })?;
    let mut values = Vec::with_capacity(runs.len());
    let mut n_hit = 0;
    for r in runs {
        let s = r?;
        if matches!(s.outcome, HitOutcome::Hit(_)) {
            n_hit += 1;
        }
        values.push(s.f_value);
    }
    let est = MeanEstimate::from_slice(&values).scaled(1.0 / params.delta);
    Ok(HfEstimate {
        mean: est.mean,
        stderr: est.stderr,
        n_hit,
        n_escape: params.n - n_hit,
        delta: params.delta,
        dt: params.resolved_dt(),
    })
}

/// Default chord cut for the harmonic-measure check: the endpoint law has
/// infinite mass near the start point, so only chords `>= eps_cut` are compared.
pub const DEFAULT_EPS_CUT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicValidation {
    pub n_runs: usize,
    pub n_hits: usize,
    /// Hits with chord `>= eps_cut`, the sample entering the KS tests.
    pub n_kept: usize,
    pub eps_cut: f64,
    pub ks_alpha: f64,
    /// Diagnostic: `beta` against the uniform law on `[0, 2 pi)`.
    pub ks_beta: f64,
    pub critical_1pct: f64,
    pub pass: bool,
    pub kept: Vec<AngleCoords>,
}

/// Kolmogorov–Smirnov check of simulated sphere-hit angles against the
/// endpoint density `2 |x - y|^-3` restricted to chords `>= eps_cut`.
pub fn validate_harmonic(params: &HfParams, eps_cut: f64, geom: &DomainGeometry) -> Result<HarmonicValidation> {
    params.validate()?;
    if !(eps_cut > 0.0 && eps_cut <= 2.0) {
        return Err(invalid(format!("eps_cut must lie in (0, 2], got {eps_cut}")));
    }
    let (x, v) = (Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0));
    let runs = fan_out(params.n, params.threads, |i| {
        sample_excursion(&x, &v, params, NoiseStream::replica(params.seed, i as u64), geom)
    })?;
    let mut n_hits = 0;
    let mut kept = Vec::new();
    for r in runs {
        if let HitOutcome::Hit(y) = r?.outcome {
            n_hits += 1;
            let a = angles_of(&x, &v, &y)?;
            if a.chord() >= eps_cut {
                kept.push(a);
            }
        }
    }
    if kept.is_empty() {
        return Err(invalid("no hits beyond the chord cut; increase N"));
    }
    let alphas: Vec<f64> = kept.iter().map(|a| a.alpha).collect();
    let betas: Vec<f64> = kept.iter().map(|a| a.beta).collect();
    let ks_alpha = ks_statistic(&alphas, |a| truncated_alpha_cdf(eps_cut, a));
    let ks_beta = ks_statistic(&betas, |b| (b / TAU).clamp(0.0, 1.0));
    let critical_1pct = ks_critical_1pct(kept.len());
    Ok(HarmonicValidation {
        n_runs: params.n,
        n_hits,
        n_kept: kept.len(),
        eps_cut,
        ks_alpha,
        ks_beta,
        critical_1pct,
        pass: ks_alpha < critical_1pct,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v3(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn endpoint_density_examples() {
        let x = v3(0.0, 0.0, 1.0);
        assert_abs_diff_eq!(endpoint_density(&x, &v3(0.0, 0.0, -1.0)).unwrap(), 0.25, epsilon = 1e-15);
        // |x - y| = 1 at alpha = pi/3
        let y = v3((PI / 3.0).sin(), 0.0, (PI / 3.0).cos());
        assert_abs_diff_eq!(endpoint_density(&x, &y).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(endpoint_density(&x, &x), Err(Error::SingularPair));
    }

    #[test]
    fn angle_density_examples() {
        assert_abs_diff_eq!(angle_density(AngleCoords::new(PI, 0.3)).unwrap(), 0.0, epsilon = 1e-17);
        let expected = 1.0 / (16.0 * PI) * (FRAC_1_SQRT_2).powi(-3);
        assert_abs_diff_eq!(angle_density(AngleCoords::new(PI / 2.0, 1.0)).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.056_269_769_3, epsilon = 1e-9);
        assert!(angle_density(AngleCoords::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn angle_and_endpoint_densities_agree() {
        // mu(d alpha d beta) = sin(alpha) / (4 pi): dividing it out recovers 2|x-y|^-3
        let mut src = NoiseStream::new(11, 0).source();
        for _ in 0..100 {
            let alpha = PI * (1e-3 + (1.0 - 1e-3) * src.uniform());
            let a = AngleCoords::new(alpha, TAU * src.uniform());
            let via_angles = angle_density(a).unwrap() / (alpha.sin() / (4.0 * PI));
            let s = a.chord();
            assert_abs_diff_eq!(via_angles, 2.0 / (s * s * s), epsilon = 1e-9 * via_angles);
        }
    }

    #[test]
    fn f_value_examples() {
        assert_eq!(f_value(AngleCoords::new(1.3, 0.0)), 0.0);
        let f = f_value(AngleCoords::new(PI / 3.0, PI / 4.0));
        assert_abs_diff_eq!(f, 0.5 * (5.0f64 / 8.0).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(f, -0.235_001_8, epsilon = 1e-7);
        assert_eq!(f_value(AngleCoords::new(PI / 2.0, PI / 2.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn angles_round_trip_and_f_consistent() {
        let x = v3(0.0, 0.0, 1.0);
        let v = v3(1.0, 0.0, 0.0);
        let mut src = NoiseStream::new(2, 0).source();
        for _ in 0..200 {
            let a = AngleCoords::new(PI * src.uniform(), TAU * src.uniform());
            let y = point_from_angles(&x, &v, a).unwrap();
            let b = angles_of(&x, &v, &y).unwrap();
            assert_abs_diff_eq!(a.alpha, b.alpha, epsilon = 1e-9);
            assert_abs_diff_eq!((y - x).norm(), a.chord(), epsilon = 1e-12);
            assert_abs_diff_eq!(f_at_endpoint(&y, &v).unwrap(), f_value(a), epsilon = 1e-9);
        }
    }

    #[test]
    fn estimator_rejects_normal_direction() {
        let x = v3(0.0, 0.0, 1.0);
        let p = HfParams { n: 10, ..HfParams::default() };
        assert!(estimate_hf_mc(&x, &x, &p, &DomainGeometry::exterior()).is_err());
    }

    #[test]
    fn estimator_rejects_coarse_dt_and_bad_delta() {
        let x = v3(0.0, 0.0, 1.0);
        let v = v3(1.0, 0.0, 0.0);
        let g = DomainGeometry::exterior();
        let p = HfParams { n: 10, dt: Some(1e-6), ..HfParams::default() };
        assert!(estimate_hf_mc(&x, &v, &p, &g).is_err());
        let p = HfParams { n: 10, delta: 0.0, ..HfParams::default() };
        assert!(estimate_hf_mc(&x, &v, &p, &g).is_err());
        let p = HfParams { n: 0, ..HfParams::default() };
        assert!(estimate_hf_mc(&x, &v, &p, &g).is_err());
    }

    #[test]
    fn truncated_sampler_degenerate_cut() {
        let mut src = NoiseStream::new(1, 0).source();
        for _ in 0..10 {
            assert_abs_diff_eq!(sample_truncated_endpoint(2.0, &mut src).unwrap().alpha, PI, epsilon = 1e-6);
        }
        assert!(sample_truncated_endpoint(0.0, &mut src).is_err());
        assert!(sample_truncated_endpoint(2.5, &mut src).is_err());
    }

    #[test]
    fn truncated_sampler_matches_cdf() {
        let n = 100_000;
        let mut src = NoiseStream::new(77, 3).source();
        let alphas: Vec<f64> = (0..n).map(|_| sample_truncated_endpoint(1.0, &mut src).unwrap().alpha).collect();
        let d = ks_statistic(&alphas, |a| truncated_alpha_cdf(1.0, a));
        assert!(d < ks_critical_1pct(n), "KS = {d}");
    }

    /// Midpoint-rule oracle for `int f * density` over the truncated region,
    /// normalised by the truncated mass.
    fn truncated_mean_f_oracle(eps: f64) -> f64 {
        let lo = alpha_min(eps);
        let (na, nb) = (4000, 4000);
        let (ha, hb) = ((PI - lo) / na as f64, TAU / nb as f64);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..na {
            let a = lo + (i as f64 + 0.5) * ha;
            let dens = a.sin() / (a / 2.0).sin().powi(3) / (16.0 * PI);
            for j in 0..nb {
                let b = (j as f64 + 0.5) * hb;
                let f = 0.5 * (b.cos().powi(2) + b.sin().powi(2) * a.cos().powi(2)).ln();
                num += f * dens * ha * hb;
                den += dens * ha * hb;
            }
        }
        num / den
    }

    #[test]
    fn truncated_sampler_mean_f_matches_quadrature() {
        let eps = 0.5;
        let oracle = truncated_mean_f_oracle(eps);
        let n = 200_000;
        let mut src = NoiseStream::new(5, 5).source();
        let fs: Vec<f64> = (0..n).map(|_| f_value(sample_truncated_endpoint(eps, &mut src).unwrap())).collect();
        let m = MeanEstimate::from_slice(&fs);
        assert!((m.mean - oracle).abs() < 3.0 * m.stderr, "mc {} +- {} vs {}", m.mean, m.stderr, oracle);
    }

    #[test]
    fn truncated_mass_by_change_of_variables() {
        // angular route: int over alpha in [alpha_eps, pi] and beta of the angle density
        // spherical route: endpoint density in polar coordinates around the z axis with x = e1
        let x = v3(1.0, 0.0, 0.0);
        for &eps in &[0.5, 1.0] {
            let lo = alpha_min(eps);
            let na = 200_000;
            let ha = (PI - lo) / na as f64;
            let angular: f64 = (0..na)
                .map(|i| angle_density(AngleCoords::new(lo + (i as f64 + 0.5) * ha, 0.0)).unwrap() * TAU * ha)
                .sum();
            let (nt, np) = (1500, 3000);
            let (ht, hp) = (PI / nt as f64, TAU / np as f64);
            let mut spherical = 0.0;
            for i in 0..nt {
                let th = (i as f64 + 0.5) * ht;
                for j in 0..np {
                    let ph = (j as f64 + 0.5) * hp;
                    let y = v3(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
                    if (x - y).norm() >= eps {
                        spherical += endpoint_density(&x, &y).unwrap() * th.sin() / (4.0 * PI) * ht * hp;
                    }
                }
            }
            assert_abs_diff_eq!(angular, truncated_mass(eps), epsilon = 1e-6);
            assert!((spherical - angular).abs() < 2e-3 * angular, "{spherical} vs {angular}");
        }
    }

    #[test]
    fn exterior_hit_probability_matches_classical() {
        // P(hit unit sphere before radius R from |x| = s) = (1/s - 1/R) / (1 - 1/R)
        let g = DomainGeometry::exterior();
        let (s, far) = (2.0, 64.0);
        let n = 100_000;
        let cfg = SimConfig::with_dt(1e-6);
        let hits = fan_out(n, 4, |i| {
            let mut src = NoiseStream::replica(8, i as u64).source();
            matches!(first_hit_with(v3(0.0, s, 0.0), &mut src, Some(far), &g, &cfg).unwrap(), HitOutcome::Hit(_))
        })
        .unwrap()
        .into_iter()
        .filter(|h| *h)
        .count();
        let p = hits as f64 / n as f64;
        let exact = (1.0 / s - 1.0 / far) / (1.0 - 1.0 / far);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 3.0 * se, "p = {p}, exact = {exact}");
    }

    #[test]
    fn near_sphere_hit_probability() {
        let g = DomainGeometry::exterior();
        let delta = 1e-3;
        let n = 20_000;
        let cfg = SimConfig::with_dt((delta / DT_DIVISOR).powi(2));
        let hits = fan_out(n, 4, |i| {
            let mut src = NoiseStream::replica(21, i as u64).source();
            matches!(first_hit_with(v3(0.0, 0.0, 1.0 + delta), &mut src, Some(1e4), &g, &cfg).unwrap(), HitOutcome::Hit(_))
        })
        .unwrap()
        .into_iter()
        .filter(|h| *h)
        .count();
        let p = hits as f64 / n as f64;
        let exact = 1.0 / (1.0 + delta);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 3.0 * se + 1e-4, "p = {p}, exact = {exact}");
    }

    #[test]
    fn estimator_reproducible_across_threads() {
        let x = v3(0.0, 0.0, 1.0);
        let v = v3(1.0, 0.0, 0.0);
        let g = DomainGeometry::exterior();
        let p1 = HfParams { n: 2000, seed: 4, threads: 1, ..HfParams::default() };
        let p4 = HfParams { threads: 4, ..p1 };
        let a = estimate_hf_mc(&x, &v, &p1, &g).unwrap();
        let b = estimate_hf_mc(&x, &v, &p4, &g).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        assert_eq!(a.n_hit + a.n_escape, 2000);
    }

    #[test]
    fn estimator_rotation_invariant() {
        let g = DomainGeometry::exterior();
        let p = HfParams { n: 100_000, seed: 12, threads: 4, ..HfParams::default() };
        let a = estimate_hf_mc(&v3(0.0, 0.0, 1.0), &v3(1.0, 0.0, 0.0), &p, &g).unwrap();
        let s = FRAC_1_SQRT_2;
        let b = estimate_hf_mc(&v3(s, s, 0.0), &v3(0.0, 0.0, 1.0), &p, &g).unwrap();
        let tol = 3.0 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!((a.mean - b.mean).abs() < tol, "{} vs {}", a.mean, b.mean);
    }

    #[test]
    fn harmonic_validation_small() {
        let p = HfParams { n: 20_000, seed: 6, ..HfParams::default() };
        let h = validate_harmonic(&p, 0.1, &DomainGeometry::exterior()).unwrap();
        assert_eq!(h.n_kept, h.kept.len());
        assert!(h.n_kept > 100 && h.n_kept < h.n_hits);
        assert!(h.kept.iter().all(|a| a.chord() >= 0.1));
        assert!(validate_harmonic(&p, 0.0, &DomainGeometry::exterior()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn f_nonpositive_and_symmetric(alpha in 0.0..PI, beta in 0.0..TAU) {
            let f = f_value(AngleCoords::new(alpha, beta));
            prop_assert!(f <= 0.0);
            let g = f_value(AngleCoords::new(alpha, -beta));
            let h = f_value(AngleCoords::new(PI - alpha, beta));
            prop_assert!((f - g).abs() <= 1e-12 * f.abs().max(1.0));
            prop_assert!((f - h).abs() <= 1e-9 * f.abs().max(1.0));
        }

        #[test]
        fn f_at_endpoint_nonpositive(th in 0.0..PI, ph in 0.0..TAU) {
            let y = v3(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let f = f_at_endpoint(&y, &v3(1.0, 0.0, 0.0)).unwrap();
            prop_assert!(f <= 1e-15);
        }
    }
}
