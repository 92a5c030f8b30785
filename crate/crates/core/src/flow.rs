//! Many-particle flow under one common driver ("earthworm" experiments):
//! lattice ensembles, empirical measures, uniformity diagnostics and the
//! pair-distance occupation histogram.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{DomainGeometry, TorusPoint, Vec3};
use crate::noise::NoiseStream;
use crate::sde::{Driver, RbmState, SimConfig};
use crate::stats::spearman_trend;

/// Sub-samples per axis used to estimate the obstacle-free volume of a bin.
pub const VOLUME_SUBSAMPLES: usize = 5;
/// Lower edge of the first logarithmic distance bin.
pub const DEFAULT_R_MIN: f64 = 1e-6;
/// Separation below which occupation mass counts as near-collapse.
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<RbmState>,
    pub origin: Vec<Vec3>,
    pub n_per_axis: usize,
    pub spacing: f64,
    /// Lattice points discarded for lying inside the ball.
    pub dropped: usize,
}

fn torus_rho(geom: &DomainGeometry) -> Result<f64> {
    geom.rho()
        .ok_or_else(|| invalid("flow experiments need the torus geometry"))
}

/// Cell-centred `n^3` lattice over the torus cell, minus points inside the ball.
pub fn init_lattice(n: usize, geom: &DomainGeometry) -> Result<ParticleEnsemble> {
    if n < 2 {
        return Err(invalid(format!("lattice needs n >= 2 per axis, got {n}")));
    }
    let rho = torus_rho(geom)?;
    let h = 2.0 * rho / n as f64;
    let c = |i: usize| -rho + (i as f64 + 0.5) * h;
    let mut origin = Vec::with_capacity(n * n * n);
    let mut dropped = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = Vec3::new(c(i), c(j), c(k));
                if p.norm() < 1.0 {
                    dropped += 1;
                } else {
                    origin.push(p);
                }
            }
        }
    }
    let particles = origin
        .iter()
        .map(|p| RbmState::start(*p, geom))
        .collect::<Result<_>>()?;
    Ok(ParticleEnsemble {
        particles,
        origin,
        n_per_axis: n,
        spacing: h,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub positions: Vec<Vec3>,
    pub local_times: Vec<f64>,
    /// Unwrapped sum of the driving increments up to `t`.
    pub driver: Vec3,
}

impl Snapshot {
    fn of(t: f64, particles: &[RbmState], driver: Vec3) -> Self {
        Self {
            t,
            positions: particles.iter().map(|p| p.position.coords()).collect(),
            local_times: particles.iter().map(|p| p.local_time).collect(),
            driver,
        }
    }

    /// CSV with columns `particle_id, x, y, z, local_time`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| invalid(format!("csv: {e}"));
        w.write_record(["particle_id", "x", "y", "z", "local_time"]).map_err(io)?;
        for (i, (p, l)) in self.positions.iter().zip(&self.local_times).enumerate() {
            w.write_record([i.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string(), l.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| invalid(format!("csv: {e}")))
    }
}

/// Steps every particle with the same Euler increments and returns deep
/// copies at the requested times. Sphere jumps are never used here because
/// an ensemble filling the cell always has particles near the obstacle.
pub fn evolve_ensemble(
    ens: &mut ParticleEnsemble,
    noise: NoiseStream,
    snapshot_times: &[f64],
    geom: &DomainGeometry,
    dt: f64,
) -> Result<Vec<Snapshot>> {
    if snapshot_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("snapshot times must be strictly increasing"));
    }
    if snapshot_times.first().is_some_and(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(invalid("snapshot times must be finite and >= 0"));
    }
    crate::noise::check_dt(dt)?;
    let mut src = noise.source();
    let mut clock = 0.0f64;
    let mut driver = Vec3::zeros();
    let mut out = Vec::with_capacity(snapshot_times.len());
    for &target in snapshot_times {
        while clock < target - 1e-12 * target.max(1.0) {
            let h = dt.min(target - clock);
            let inc = src.increment(h);
            ens.particles
                .par_iter_mut()
                .try_for_each(|p| -> Result<()> {
                    let (s, _) = crate::sde::step(p, &inc, h, geom)?;
                    *p = s;
                    Ok(())
                })?;
            driver += inc;
            clock += h;
        }
        clock = clock.max(target);
        if let Some(p) = ens.particles.iter().find(|p| p.position.norm() < 1.0) {
            return Err(Error::InsideObstacle {
                radius: p.position.norm(),
            });
        }
        out.push(Snapshot::of(clock, &ens.particles, driver));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub n_bins: usize,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Obstacle-free volume of each bin.
    pub corrected_volume: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_bins + j) * self.n_bins + k
    }

    /// CSV with columns `i, j, k, count, corrected_volume`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| invalid(format!("csv: {e}"));
        w.write_record(["i", "j", "k", "count", "corrected_volume"]).map_err(io)?;
        let n = self.n_bins;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let b = self.index(i, j, k);
                    w.write_record([
                        i.to_string(),
                        j.to_string(),
                        k.to_string(),
                        self.counts[b].to_string(),
                        self.corrected_volume[b].to_string(),
                    ])
                    .map_err(io)?;
                }
            }
        }
        w.flush().map_err(|e| invalid(format!("csv: {e}")))
    }
}

/// Obstacle-free volume of every bin of the regular `n^3` grid.
pub fn corrected_bin_volumes(n: usize, rho: f64) -> Vec<f64> {
    let h = 2.0 * rho / n as f64;
    let m = VOLUME_SUBSAMPLES;
    let sub = h / m as f64;
    let edge = |i: usize| -rho + i as f64 * h;
    let mut vols = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let lo = Vec3::new(edge(i), edge(j), edge(k));
                // bins whose nearest point is outside the ball need no sub-sampling
                let nearest = Vec3::new(
                    0f64.clamp(lo.x, lo.x + h),
                    0f64.clamp(lo.y, lo.y + h),
                    0f64.clamp(lo.z, lo.z + h),
                );
                if nearest.norm() >= 1.0 {
                    vols.push(h * h * h);
                    continue;
                }
                let mut outside = 0;
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            let p = lo + Vec3::new(a as f64 + 0.5, b as f64 + 0.5, c as f64 + 0.5) * sub;
                            if p.norm() >= 1.0 {
                                outside += 1;
                            }
                        }
                    }
                }
                vols.push(h * h * h * outside as f64 / (m * m * m) as f64);
            }
        }
    }
    vols
}

fn bin_of(x: f64, rho: f64, n: usize) -> usize {
    let i = ((x + rho) / (2.0 * rho) * n as f64).floor();
    (i.max(0.0) as usize).min(n - 1)
}

pub fn empirical_measure(positions: &[Vec3], n_bins: usize, geom: &DomainGeometry) -> Result<EmpiricalMeasure> {
    if n_bins < 2 {
        return Err(invalid(format!("need at least 2 bins per axis, got {n_bins}")));
    }
    let rho = torus_rho(geom)?;
    let mut m = EmpiricalMeasure {
        n_bins,
        counts: vec![0; n_bins * n_bins * n_bins],
        total: 0,
        corrected_volume: corrected_bin_volumes(n_bins, rho),
    };
    for p in positions {
        let q = geom.canonicalize(*p)?.coords();
        let b = m.index(bin_of(q.x, rho, n_bins), bin_of(q.y, rho, n_bins), bin_of(q.z, rho, n_bins));
        m.counts[b] += 1;
        m.total += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub chi_square: f64,
    pub tv_distance: f64,
    /// Bins with positive reference volume (chi-square degrees of freedom + 1).
    pub bins_used: usize,
}

/// Chi-square and total-variation distance against the uniform law on the
/// obstacle-free cell.
pub fn uniformity_metric(m: &EmpiricalMeasure) -> Result<Uniformity> {
    if m.total == 0 {
        return Err(invalid("empirical measure is empty"));
    }
    let vol: f64 = m.corrected_volume.iter().sum();
    let n = m.total as f64;
    let (mut chi, mut tv, mut used) = (0.0, 0.0, 0);
    for (&c, &v) in m.counts.iter().zip(&m.corrected_volume) {
        let p = v / vol;
        let c = c as f64;
        tv += (c / n - p).abs();
        if p > 0.0 {
            chi += (c - n * p).powi(2) / (n * p);
            used += 1;
        }
    }
    Ok(Uniformity {
        chi_square: chi,
        tv_distance: 0.5 * tv,
        bins_used: used,
    })
}

/// Spearman correlation of a metric sequence with snapshot order; negative
/// values indicate a decreasing trend. Diagnostic only.
pub fn uniformity_trend(metric: &[f64]) -> f64 {
    spearman_trend(metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistogram {
    /// Bin edges; the first bin is `[0, edges[1])`.
    pub edges: Vec<f64>,
    /// Occupation fraction per bin over the averaging window.
    pub mass: Vec<f64>,
    pub threshold: f64,
    /// Exact occupation fraction with separation below `threshold`.
    pub below_threshold: f64,
    pub window: (f64, f64),
}

impl PairHistogram {
    pub fn smallest_bin_mass(&self) -> f64 {
        self.mass[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub n_bins: usize,
    pub r_min: f64,
    pub threshold: f64,
    /// Start of the averaging window as a fraction of the horizon.
    pub burn_in: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            n_bins: 60,
            r_min: DEFAULT_R_MIN,
            threshold: DEFAULT_COLLAPSE_THRESHOLD,
            burn_in: 0.5,
        }
    }
}

fn symmetric_distance(geom: &DomainGeometry, s: &[RbmState; 2]) -> f64 {
    let (x, y) = (s[0].position.coords(), s[1].position.coords());
    geom.diff(&x, &y).norm().min(geom.diff(&y, &x).norm())
}

/// Time-weighted occupation histogram of the pair separation over
/// `[burn_in * T, T]`. Bins: `[0, r_min)` followed by logarithmic bins up
/// to the torus diameter.
pub fn pair_distance_histogram(
    x0: Vec3,
    y0: Vec3,
    t_end: f64,
    noise: NoiseStream,
    geom: &DomainGeometry,
    cfg: &SimConfig,
    spec: &HistogramSpec,
) -> Result<PairHistogram> {
    let rho = torus_rho(geom)?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(invalid("horizon T must be positive"));
    }
    if spec.n_bins < 2 || !(spec.r_min > 0.0) || !(0.0..1.0).contains(&spec.burn_in) {
        return Err(invalid("histogram needs n_bins >= 2, r_min > 0 and burn_in in [0, 1)"));
    }
    let r_max = rho * 3f64.sqrt() * (1.0 + 1e-12);
    let nlog = spec.n_bins - 1;
    let ratio = (r_max / spec.r_min).ln() / nlog as f64;
    let mut edges = vec![0.0];
    edges.extend((0..=nlog).map(|i| spec.r_min * (ratio * i as f64).exp()));
    let bin = |r: f64| -> usize {
        if r < spec.r_min {
            0
        } else {
            (1 + ((r / spec.r_min).ln() / ratio).floor() as usize).min(spec.n_bins - 1)
        }
    };

    let (w0, w1) = (spec.burn_in * t_end, t_end);
    let mut mass = vec![0.0; spec.n_bins];
    let mut below = 0.0;
    let mut states = [RbmState::start(x0, geom)?, RbmState::start(y0, geom)?];
    let mut driver = Driver::new(geom, cfg, noise)?;
    while states[0].clock < t_end {
        // separation is frozen during a jump and sampled at the left end of a step
        let r = symmetric_distance(geom, &states);
        let t0 = states[0].clock;
        driver.advance(&mut states, None)?;
        let overlap = states[0].clock.min(w1) - t0.max(w0);
        if overlap > 0.0 {
            mass[bin(r)] += overlap;
            if r < spec.threshold {
                below += overlap;
            }
        }
    }
    let span = w1 - w0;
    mass.iter_mut().for_each(|m| *m /= span);
    Ok(PairHistogram {
        edges,
        mass,
        threshold: spec.threshold,
        below_threshold: below / span,
        window: (w0, w1),
    })
}

/// Positions in the obstacle's frame: `canonicalize(X_t - B_t)`.
pub fn earthworm_frame(positions: &[Vec3], driver: &Vec3, geom: &DomainGeometry) -> Result<Vec<TorusPoint>> {
    positions.iter().map(|p| geom.canonicalize(p - driver)).collect()
}

/// Inverse of [`earthworm_frame`]: `canonicalize(P + B_t)`.
pub fn earthworm_unframe(shifted: &[TorusPoint], driver: &Vec3, geom: &DomainGeometry) -> Result<Vec<Vec3>> {
    shifted
        .iter()
        .map(|p| geom.canonicalize(p.coords() + driver).map(|q| q.coords()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;
    use approx::assert_abs_diff_eq;

    fn torus(rho: f64) -> DomainGeometry {
        DomainGeometry::torus(rho).unwrap()
    }

    #[test]
    fn lattice_examples() {
        let e = init_lattice(2, &torus(2.0)).unwrap();
        assert_eq!(e.particles.len(), 8);
        assert_eq!(e.dropped, 0);
        assert!(e.origin.iter().all(|p| p.abs() == Vec3::new(1.0, 1.0, 1.0)));
        assert!(init_lattice(1, &torus(2.0)).is_err());
        assert!(init_lattice(4, &DomainGeometry::exterior()).is_err());

        let rho = 4.0;
        let e = init_lattice(16, &torus(rho)).unwrap();
        assert_eq!(e.particles.len() + e.dropped, 4096);
        let frac = e.dropped as f64 / 4096.0;
        let ball = (4.0 * std::f64::consts::PI / 3.0) / (8.0 * rho * rho * rho);
        assert!((frac - ball).abs() < 3e-3, "{frac} vs {ball}");
    }

    #[test]
    fn snapshot_at_zero_is_lattice() {
        let g = torus(3.0);
        let mut e = init_lattice(4, &g).unwrap();
        let snaps = evolve_ensemble(&mut e, NoiseStream::new(1, 0), &[0.0, 0.05], &g, 1e-3).unwrap();
        assert_eq!(snaps[0].positions, e.origin);
        assert_eq!(snaps[0].driver, Vec3::zeros());
        assert_abs_diff_eq!(snaps[1].t, 0.05, epsilon = 1e-12);
        assert!(snaps[1].positions.iter().all(|p| p.norm() >= 1.0));
        assert!(evolve_ensemble(&mut e, NoiseStream::new(1, 0), &[0.2, 0.1], &g, 1e-3).is_err());
    }

    #[test]
    fn coincident_particles_stay_together_and_order_irrelevant() {
        let g = torus(2.0);
        let pts = [Vec3::new(1.2, 0.0, 0.0), Vec3::new(1.2, 0.0, 0.0), Vec3::new(-1.5, 0.7, 0.3)];
        let build = |order: &[usize]| ParticleEnsemble {
            particles: order.iter().map(|&i| RbmState::start(pts[i], &g).unwrap()).collect(),
            origin: order.iter().map(|&i| pts[i]).collect(),
            n_per_axis: 0,
            spacing: 0.0,
            dropped: 0,
        };
        let mut a = build(&[0, 1, 2]);
        let mut b = build(&[2, 1, 0]);
        let sa = evolve_ensemble(&mut a, NoiseStream::new(4, 0), &[2.0], &g, 1e-3).unwrap();
        let sb = evolve_ensemble(&mut b, NoiseStream::new(4, 0), &[2.0], &g, 1e-3).unwrap();
        assert_eq!(sa[0].positions[0], sa[0].positions[1]);
        assert_eq!(sa[0].positions[0], sb[0].positions[2]);
        assert_eq!(sa[0].positions[2], sb[0].positions[0]);
        assert!(sa[0].local_times.iter().any(|l| *l > 0.0));
    }

    #[test]
    fn translation_equivariance_without_reflection() {
        let g = torus(4.0);
        let shift = Vec3::new(0.3, -0.2, 0.1);
        let pts = vec![Vec3::new(3.0, 3.0, 3.0), Vec3::new(-2.5, 2.5, 3.0)];
        let mk = |s: Vec3| ParticleEnsemble {
            particles: pts.iter().map(|p| RbmState::start(p + s, &g).unwrap()).collect(),
            origin: pts.clone(),
            n_per_axis: 0,
            spacing: 0.0,
            dropped: 0,
        };
        let (mut a, mut b) = (mk(Vec3::zeros()), mk(shift));
        let sa = evolve_ensemble(&mut a, NoiseStream::new(8, 0), &[0.01], &g, 1e-3).unwrap();
        let sb = evolve_ensemble(&mut b, NoiseStream::new(8, 0), &[0.01], &g, 1e-3).unwrap();
        for (p, q) in sa[0].positions.iter().zip(&sb[0].positions) {
            assert!(g.diff(q, &(p + shift)).norm() < 1e-12);
        }
    }

    #[test]
    fn empirical_measure_counts() {
        let g = torus(2.0);
        let one = vec![Vec3::new(1.5, 1.5, 1.5); 7];
        let m = empirical_measure(&one, 4, &g).unwrap();
        assert_eq!(m.total, 7);
        assert_eq!(m.counts[m.index(3, 3, 3)], 7);
        assert_eq!(m.counts.iter().sum::<u64>(), 7);
        let u = uniformity_metric(&m).unwrap();
        let vol: f64 = m.corrected_volume.iter().sum();
        assert_abs_diff_eq!(u.tv_distance, 1.0 - m.corrected_volume[m.index(3, 3, 3)] / vol, epsilon = 1e-12);
        assert!(empirical_measure(&one, 1, &g).is_err());
    }

    #[test]
    fn lattice_binning_exact() {
        // one lattice point per bin when the grids coincide
        let g = torus(4.0);
        let e = init_lattice(8, &g).unwrap();
        let m = empirical_measure(&e.origin, 8, &g).unwrap();
        let empty = m.counts.iter().filter(|&&c| c == 0).count();
        assert_eq!(empty, e.dropped);
        assert!(m.counts.iter().all(|&c| c <= 1));
    }

    #[test]
    fn corrected_volumes() {
        let rho = 3.0;
        let v = corrected_bin_volumes(6, rho);
        let total: f64 = v.iter().sum();
        let exact = 8.0 * rho.powi(3) - 4.0 * std::f64::consts::PI / 3.0;
        // mid-point sub-sampling misclassifies parts of the sub-cells cut by the sphere
        assert!((total - exact).abs() < 0.5, "{total} vs {exact}");
        let fine: f64 = corrected_bin_volumes(24, rho).iter().sum();
        assert!((fine - exact).abs() < (total - exact).abs(), "{fine} vs {exact}");
        assert!(v.iter().all(|&x| x <= 1.0 + 1e-12));
    }

    #[test]
    fn proportional_counts_give_zero_metrics() {
        let mut m = EmpiricalMeasure {
            n_bins: 2,
            counts: vec![0; 8],
            total: 0,
            corrected_volume: vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0],
        };
        m.counts = m.corrected_volume.iter().map(|v| (*v * 10.0) as u64).collect();
        m.total = m.counts.iter().sum();
        let u = uniformity_metric(&m).unwrap();
        assert_eq!(u.chi_square, 0.0);
        assert!(u.tv_distance.abs() < 1e-15);
    }

    #[test]
    fn uniform_sample_chi_square_near_dof() {
        let g = torus(2.0);
        let mut src = NoiseStream::new(13, 0).source();
        let mut pts = Vec::new();
        while pts.len() < 200_000 {
            let p = Vec3::new(src.uniform(), src.uniform(), src.uniform()) * 4.0 - Vec3::repeat(2.0);
            if p.norm() >= 1.0 {
                pts.push(p);
            }
        }
        let m = empirical_measure(&pts, 4, &g).unwrap();
        let u = uniformity_metric(&m).unwrap();
        let dof = (u.bins_used - 1) as f64;
        // the 5^3 volume correction biases partially covered bins slightly
        assert!(u.chi_square < dof + 6.0 * (2.0 * dof).sqrt() + 30.0, "chi2 {} dof {dof}", u.chi_square);
        assert!(u.tv_distance < 0.01);
    }

    #[test]
    fn pair_histogram_trivial_cases() {
        let g = torus(4.0);
        let spec = HistogramSpec::default();
        let x = Vec3::new(2.0, 2.0, 2.0);
        let h = pair_distance_histogram(x, x, 1.0, NoiseStream::new(1, 0), &g, &SimConfig::with_dt(1e-4), &spec).unwrap();
        assert_abs_diff_eq!(h.smallest_bin_mass(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.below_threshold, 1.0, epsilon = 1e-12);

        let y = Vec3::new(2.0, 2.3, 2.0);
        let cfg = SimConfig::with_dt(1e-6).stepped();
        let h = pair_distance_histogram(x, y, 1e-3, NoiseStream::new(1, 0), &g, &cfg, &spec).unwrap();
        let full: Vec<_> = h.mass.iter().enumerate().filter(|(_, m)| **m > 0.0).collect();
        assert_eq!(full.len(), 1);
        let i = full[0].0;
        assert!(h.edges[i] <= 0.3 && 0.3 < h.edges[i + 1]);
        assert_abs_diff_eq!(*full[0].1, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pair_histogram_symmetric() {
        let g = torus(3.0);
        let (x, y) = (Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.1, 0.0));
        let cfg = SimConfig::with_dt(1e-6);
        let spec = HistogramSpec::default();
        let a = pair_distance_histogram(x, y, 20.0, NoiseStream::new(2, 0), &g, &cfg, &spec).unwrap();
        let b = pair_distance_histogram(y, x, 20.0, NoiseStream::new(2, 0), &g, &cfg, &spec).unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.mass.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn earthworm_frame_examples() {
        let g = torus(3.0);
        let pts = vec![Vec3::new(1.5, -2.0, 0.25), Vec3::new(2.9, 2.9, -2.9)];
        let id = earthworm_frame(&pts, &Vec3::zeros(), &g).unwrap();
        assert!(id.iter().zip(&pts).all(|(a, b)| a.coords() == *b));

        // dyadic points and shift: both directions are exact in binary floating point
        let dy = vec![Vec3::new(1.5, -2.0, 0.25), Vec3::new(2.875, 2.75, -2.5)];
        let b = Vec3::new(0.5, -1.25, 7.75);
        let there = earthworm_frame(&dy, &b, &g).unwrap();
        assert_eq!(earthworm_unframe(&there, &b, &g).unwrap(), dy);

        let b = Vec3::new(0.1234567, -5.4321, 13.37);
        let back = earthworm_unframe(&earthworm_frame(&pts, &b, &g).unwrap(), &b, &g).unwrap();
        for (p, q) in back.iter().zip(&pts) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn unreflected_particle_returns_to_origin_in_frame() {
        let g = torus(4.0);
        let p0 = Vec3::new(3.0, -3.0, 3.0);
        let mut e = ParticleEnsemble {
            particles: vec![RbmState::start(p0, &g).unwrap()],
            origin: vec![p0],
            n_per_axis: 0,
            spacing: 0.0,
            dropped: 0,
        };
        let s = evolve_ensemble(&mut e, NoiseStream::new(3, 0), &[0.05], &g, 1e-3).unwrap();
        assert_eq!(s[0].local_times[0], 0.0);
        let f = earthworm_frame(&s[0].positions, &s[0].driver, &g).unwrap();
        assert!((f[0].coords() - p0).norm() < 1e-12);
    }
}
