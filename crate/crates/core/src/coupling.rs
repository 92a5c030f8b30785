//! Synchronous-coupling observables: log-separation ladders, big-excursion
//! chains of a single path, and the projection-product derivative map.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{inward_normal, project_with_normal, DomainGeometry, Vec3, BOUNDARY_TOL};
use crate::noise::NoiseStream;
use crate::sde::{Driver, RbmState, SimConfig, StepOutcome, Trace};
use crate::stats::{fan_out, MeanEstimate};

/// Default `c4` in `eps_star = c4 * eps`.
pub const DEFAULT_C4: f64 = 1.0;
pub const DEFAULT_FD_EPS: f64 = 1e-5;
/// Exponent `beta_1` in the tangential-alignment condition `ratio <= eps^beta_1`.
pub const ALIGNMENT_EXPONENT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub k: usize,
    pub t: f64,
    pub v: f64,
    pub lx: f64,
    pub ly: f64,
    /// Local time the firing step added beyond the segment quantum.
    pub overshoot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSeparationLadder {
    pub b: f64,
    pub points: Vec<LadderPoint>,
    /// False when the move budget ran out before `K` segments completed.
    pub complete: bool,
    pub moves: u64,
}

impl LogSeparationLadder {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v).collect()
    }

    pub fn ladder_times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// CSV with columns `k, t, V_k, L^X, L^Y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| invalid(format!("csv: {e}"));
        w.write_record(["k", "t", "V_k", "L^X", "L^Y"]).map_err(io)?;
        for p in &self.points {
            w.write_record([
                p.k.to_string(),
                p.t.to_string(),
                p.v.to_string(),
                p.lx.to_string(),
                p.ly.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| invalid(format!("csv: {e}")))
    }
}

fn pair_distance(geom: &DomainGeometry, s: &[RbmState; 2]) -> f64 {
    geom.diff(&s[1].position.coords(), &s[0].position.coords()).norm()
}

/// Runs the coupled pair through `k` ladder segments. Segment `j + 1` ends at
/// the first contact of either process whose local time has grown by `b`
/// since the end of segment `j`.
pub fn log_separation_ladder(
    x0: Vec3,
    y0: Vec3,
    b: f64,
    k: usize,
    noise: NoiseStream,
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<LogSeparationLadder> {
    if !(b.is_finite() && b > 0.0) {
        return Err(invalid(format!("ladder quantum b must be positive, got {b}")));
    }
    let mut states = [RbmState::start(x0, geom)?, RbmState::start(y0, geom)?];
    let r0 = pair_distance(geom, &states);
    if r0 == 0.0 {
        return Err(Error::SingularPair);
    }
    let mut driver = Driver::new(geom, cfg, noise)?;
    let mut points = vec![LadderPoint {
        k: 0,
        t: 0.0,
        v: r0.ln(),
        lx: 0.0,
        ly: 0.0,
        overshoot: 0.0,
    }];
    let mut base = (0.0, 0.0);
    while points.len() <= k {
        let mv = match driver.advance(&mut states, None) {
            Ok(m) => m,
            Err(Error::BudgetExceeded(_)) => {
                return Ok(LogSeparationLadder {
                    b,
                    points,
                    complete: false,
                    moves: driver.moves,
                })
            }
            Err(e) => return Err(e),
        };
        let gx = states[0].local_time - base.0;
        let gy = states[1].local_time - base.1;
        let fx = mv.outcome[0].reflected && gx >= b;
        let fy = mv.outcome[1].reflected && gy >= b;
        if fx || fy {
            let over = if fx { gx - b } else { 0.0f64 }.max(if fy { gy - b } else { 0.0 });
            points.push(LadderPoint {
                k: points.len(),
                t: states[0].clock,
                v: pair_distance(geom, &states).ln(),
                lx: states[0].local_time,
                ly: states[1].local_time,
                overshoot: over,
            });
            base = (states[0].local_time, states[1].local_time);
        }
    }
    Ok(LogSeparationLadder {
        b,
        points,
        complete: true,
        moves: driver.moves,
    })
}

/// `|<y - x, n(x)>| / |y - x|` using the minimal-image difference.
pub fn alignment_ratio(x: &Vec3, y: &Vec3, geom: &DomainGeometry) -> Result<f64> {
    let n = inward_normal(x)?;
    let d = geom.diff(&geom.canonicalize(*y)?.coords(), &geom.canonicalize(*x)?.coords());
    let len = d.norm();
    if len == 0.0 {
        return Err(Error::SingularPair);
    }
    Ok((d.dot(&n).abs() / len).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub endpoint: Vec3,
    pub dl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigExcursionChain {
    pub eps_star: f64,
    pub entries: Vec<ChainEntry>,
}

impl BigExcursionChain {
    pub fn total_local_time(&self) -> f64 {
        self.entries.iter().map(|e| e.dl).sum()
    }

    /// Number of kept excursions (entries after the first contact point).
    pub fn kept(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }
}

/// Streaming big-excursion extraction from the sequence of boundary contacts.
///
/// An excursion runs between consecutive contact steps; it is kept when its
/// endpoints are at least `eps_star` apart. The first contact point opens
/// the chain and every contact's local time is credited to the latest entry.
#[derive(Debug, Clone)]
pub struct ExcursionTracker {
    chain: BigExcursionChain,
    last_contact: Option<Vec3>,
}

impl ExcursionTracker {
    pub fn new(eps_star: f64) -> Self {
        Self {
            chain: BigExcursionChain {
                eps_star,
                entries: Vec::new(),
            },
            last_contact: None,
        }
    }

    pub fn contact(&mut self, at: Vec3, dl: f64) {
        match self.last_contact {
            Some(prev) if (at - prev).norm() < self.chain.eps_star => {
                if let Some(e) = self.chain.entries.last_mut() {
                    e.dl += dl;
                }
            }
            _ => self.chain.entries.push(ChainEntry { endpoint: at, dl }),
        }
        self.last_contact = Some(at);
    }

    pub fn observe(&mut self, state: &RbmState, outcome: &StepOutcome) {
        if outcome.reflected {
            self.contact(state.position.coords(), outcome.dl);
        }
    }

    pub fn finish(self) -> BigExcursionChain {
        self.chain
    }
}

/// Big-excursion chain of a recorded single-process trace.
pub fn extract_big_excursions(trace: &Trace, eps_star: f64) -> Result<BigExcursionChain> {
    if !trace.has_boundary_flags() {
        return Err(Error::MissingBoundaryFlags);
    }
    if !(eps_star >= 0.0) {
        return Err(invalid("eps_star must be non-negative"));
    }
    let mut tracker = ExcursionTracker::new(eps_star);
    for w in trace.samples.windows(2) {
        if w[1].contact {
            tracker.contact(w[1].position, w[1].local_time - w[0].local_time);
        }
    }
    Ok(tracker.finish())
}

/// `exp(L) pi_{x*_m} ... pi_{x*_0} v0`.
pub fn derivative_map(chain: &BigExcursionChain, total_local_time: f64, v0: &Vec3) -> Vec3 {
    let mut v = *v0;
    for e in &chain.entries {
        // endpoints come from the projection scheme and are unit to rounding
        v = project_with_normal(&(e.endpoint / e.endpoint.norm()), &v);
    }
    v * total_local_time.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDerivativeCheck {
    pub eps: f64,
    pub c4: f64,
    pub finite_diff: Vec3,
    pub product: Vec3,
    pub rel_err: f64,
    pub local_time: f64,
    pub chain_len: usize,
}

/// Compares `(X^{x + eps v} - X^x) / eps` at `sigma^X_b` with the product
/// formula built from the big excursions of `X^x` at `eps_star = c4 * eps`.
/// Several `c4` values share one simulated pair.
pub fn check_flow_derivative(
    x: &Vec3,
    v: &Vec3,
    eps: f64,
    b: f64,
    c4: &[f64],
    noise: NoiseStream,
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<Vec<FlowDerivativeCheck>> {
    let n = inward_normal(x)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if !(b.is_finite() && b >= 0.0) {
        return Err(invalid(format!("b must be >= 0, got {b}")));
    }
    if (v.norm() - 1.0).abs() > 1e-9 || n.dot(v).abs() > 1e-9 {
        return Err(invalid("v must be a unit tangent vector at x"));
    }
    if c4.is_empty() || c4.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(invalid("c4 values must be positive"));
    }
    let y0 = x + v * eps;
    if y0.norm() < 1.0 - BOUNDARY_TOL || geom.rho().is_some_and(|r| eps >= r) {
        return Err(invalid("x + eps v leaves the closed domain"));
    }
    let mut states = [RbmState::start(*x, geom)?, RbmState::start(y0, geom)?];
    let mut trackers: Vec<ExcursionTracker> =
        c4.iter().map(|c| ExcursionTracker::new(c * eps)).collect();
    let mut driver = Driver::new(geom, cfg, noise)?;
    loop {
        let mv = driver.advance(&mut states, None)?;
        for t in trackers.iter_mut() {
            t.observe(&states[0], &mv.outcome[0]);
        }
        if mv.outcome[0].reflected && states[0].local_time >= b {
            break;
        }
    }
    let finite_diff = geom.diff(&states[1].position.coords(), &states[0].position.coords()) / eps;
    let l = states[0].local_time;
    Ok(trackers
        .into_iter()
        .zip(c4)
        .map(|(t, &c)| {
            let chain = t.finish();
            let product = derivative_map(&chain, l, v);
            FlowDerivativeCheck {
                eps,
                c4: c,
                finite_diff,
                product,
                rel_err: (finite_diff - product).norm() / product.norm(),
                local_time: l,
                chain_len: chain.entries.len(),
            }
        })
        .collect())
}

/// Tangentially aligned pair: `x0 = e3` on the sphere and `y0 = x0 + sep e1`.
pub fn aligned_pair(sep: f64) -> (Vec3, Vec3) {
    let x0 = Vec3::new(0.0, 0.0, 1.0);
    (x0, x0 + Vec3::new(sep, 0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub sep: f64,
    pub b: f64,
    pub replicas: usize,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftResult {
    pub increments: Vec<f64>,
    pub mean: MeanEstimate,
    pub incomplete: usize,
}

/// `V_1 - V_0` over independent replicas of a tangentially aligned pair.
pub fn coupling_drift(p: &DriftParams, geom: &DomainGeometry, cfg: &SimConfig) -> Result<DriftResult> {
    if p.replicas == 0 {
        return Err(invalid("replica count must be positive"));
    }
    let (x0, y0) = aligned_pair(p.sep);
    let ladders = fan_out(p.replicas, p.threads, |i| {
        log_separation_ladder(x0, y0, p.b, 1, NoiseStream::replica(p.seed, i as u64), geom, cfg)
    })?;
    let mut increments = Vec::with_capacity(p.replicas);
    let mut incomplete = 0;
    for l in ladders {
        let l = l?;
        if l.complete {
            increments.push(l.points[1].v - l.points[0].v);
        } else {
            incomplete += 1;
        }
    }
    let mean = MeanEstimate::from_slice(&increments);
    Ok(DriftResult {
        increments,
        mean,
        incomplete,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceDiagnostic {
    pub replicas: usize,
    /// Replicas whose minimum of `M_t` stayed finite.
    pub finite_min: usize,
    /// Replicas whose last 10% of `M_t` samples contain an increase.
    pub not_monotone_tail: usize,
}

/// Non-coalescence diagnostic: `M_t` sampled every `every` moves up to time `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn coalescence_diagnostic(
    x0: Vec3,
    y0: Vec3,
    t_end: f64,
    every: u64,
    replicas: usize,
    seed: u64,
    threads: usize,
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<CoalescenceDiagnostic> {
    let runs = fan_out(replicas, threads, |i| -> Result<(bool, bool)> {
        let mut states = [RbmState::start(x0, geom)?, RbmState::start(y0, geom)?];
        let mut driver = Driver::new(geom, cfg, NoiseStream::replica(seed, i as u64))?;
        let mut m = vec![pair_distance(geom, &states).ln()];
        while states[0].clock < t_end {
            driver.advance(&mut states, None)?;
            if driver.moves % every.max(1) == 0 {
                m.push(pair_distance(geom, &states).ln());
            }
        }
        let finite = m.iter().all(|v| v.is_finite());
        let tail = &m[m.len() - (m.len() / 10).max(2).min(m.len())..];
        Ok((finite, tail.windows(2).any(|w| w[1] > w[0])))
    })?;
    let mut d = CoalescenceDiagnostic {
        replicas,
        finite_min: 0,
        not_monotone_tail: 0,
    };
    for r in runs {
        let (finite, rising) = r?;
        d.finite_min += finite as usize;
        d.not_monotone_tail += rising as usize;
    }
    Ok(d)
}
