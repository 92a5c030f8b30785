//! Strong solutions of the Skorokhod equations for reflected Brownian motion
//! outside the unit ball.
//!
//! Near the sphere the process is advanced by Euler steps with radial
//! projection: a free move that ends inside the ball is pushed back onto the
//! sphere and the penetration depth is added to the boundary local time.
//! Away from the sphere (`FarField::SphereWalk`) the free Brownian motion is
//! advanced exactly by jumping to a uniform point on the largest obstacle-free
//! sphere around the current position; the elapsed time is drawn from the
//! ball exit-time law. Every process sharing one driver receives the same
//! displacement, so synchronous couplings stay exact.

pub mod exit_time;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{DomainGeometry, TorusPoint, Vec3, BOUNDARY_TOL};
use crate::noise::{check_dt, NoiseSource, NoiseStream};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000_000;
/// Default sphere-walk threshold, in units of `sqrt(dt)`.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbmState {
    pub position: TorusPoint,
    pub local_time: f64,
    pub clock: f64,
}

impl RbmState {
    /// Initial state at `x0`; points within the boundary tolerance inside the
    /// ball are snapped onto the sphere.
    pub fn start(x0: Vec3, geom: &DomainGeometry) -> Result<Self> {
        let p = geom.canonicalize(x0)?;
        let r = p.norm();
        let pos = if r >= 1.0 {
            p.coords()
        } else if r >= 1.0 - BOUNDARY_TOL {
            p.coords() / r
        } else {
            return Err(Error::InsideObstacle { radius: r });
        };
        Ok(Self {
            position: TorusPoint::from_canonical(pos),
            local_time: 0.0,
            clock: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    pub reflected: bool,
    pub dl: f64,
}

/// One projection-scheme step driven by `increment`.
pub fn step(
    state: &RbmState,
    increment: &Vec3,
    dt: f64,
    geom: &DomainGeometry,
) -> Result<(RbmState, StepOutcome)> {
    if !increment.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("increment"));
    }
    if state.position.norm() < 1.0 - BOUNDARY_TOL {
        return Err(Error::InsideObstacle {
            radius: state.position.norm(),
        });
    }
    let (pos, dl) = reflect(&state.position.coords(), increment, geom)?;
    Ok((
        RbmState {
            position: TorusPoint::from_canonical(pos),
            local_time: state.local_time + dl,
            clock: state.clock + dt,
        },
        StepOutcome {
            reflected: dl > 0.0,
            dl,
        },
    ))
}

#[inline]
fn reflect(pos: &Vec3, increment: &Vec3, geom: &DomainGeometry) -> Result<(Vec3, f64)> {
    let moved = geom.wrap(pos + increment);
    let r = moved.norm();
    if r >= 1.0 {
        Ok((moved, 0.0))
    } else if r == 0.0 {
        Err(Error::DegenerateIncrement)
    } else {
        Ok((moved / r, 1.0 - r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FarField {
    /// Euler steps everywhere.
    Stepped,
    /// Exact sphere jumps whenever every driven process is farther than
    /// `threshold * sqrt(dt)` from the obstacle.
    SphereWalk { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub far_field: FarField,
    /// Hard cap on moves (steps plus jumps) per trajectory.
    pub max_steps: u64,
    /// Record a trace sample every this many moves.
    pub record_every: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            far_field: FarField::SphereWalk {
                threshold: DEFAULT_JUMP_THRESHOLD,
            },
            max_steps: DEFAULT_MAX_STEPS,
            record_every: None,
        }
    }
}

impl SimConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn stepped(mut self) -> Self {
        self.far_field = FarField::Stepped;
        self
    }

    pub fn recording(mut self, every: u64) -> Self {
        self.record_every = Some(every.max(1));
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_dt(self.dt)?;
        if let FarField::SphereWalk { threshold } = self.far_field {
            if !(threshold.is_finite() && threshold > 0.0) {
                return Err(invalid("sphere-walk threshold must be positive"));
            }
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        Ok(())
    }

    fn jump_radius_threshold(&self) -> Option<f64> {
        match self.far_field {
            FarField::Stepped => None,
            FarField::SphereWalk { threshold } => Some(threshold * self.dt.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StoppingRule {
    FixedTime(f64),
    /// First boundary contact at which `L^X >= b`.
    LocalTimeX(f64),
    /// First boundary contact of either process at which its local time is `>= b`.
    LocalTimeEither(f64),
    HitSphere,
    EscapeRadius(f64),
}

impl StoppingRule {
    fn validate(&self, geom: &DomainGeometry) -> Result<()> {
        match *self {
            StoppingRule::FixedTime(t) if !(t.is_finite() && t >= 0.0) => {
                Err(invalid(format!("fixed time must be >= 0, got {t}")))
            }
            StoppingRule::LocalTimeX(b) | StoppingRule::LocalTimeEither(b)
                if !(b.is_finite() && b >= 0.0) =>
            {
                Err(invalid(format!("local-time level must be >= 0, got {b}")))
            }
            StoppingRule::EscapeRadius(_) if geom.is_torus() => Err(invalid(
                "EscapeRadius is only meaningful in exterior free space",
            )),
            StoppingRule::EscapeRadius(r) if !(r > 1.0) => {
                Err(invalid(format!("escape radius must exceed 1, got {r}")))
            }
            _ => Ok(()),
        }
    }
}

fn fixed_time(rules: &[StoppingRule]) -> Option<f64> {
    rules
        .iter()
        .filter_map(|r| match r {
            StoppingRule::FixedTime(t) => Some(*t),
            _ => None,
        })
        .reduce(f64::min)
}

fn time_reached(clock: f64, t: f64) -> bool {
    clock >= t - 1e-12 * t.max(1.0)
}

/// Whether any rule fires for the (primary, optional partner) pair after a move.
fn rules_fire(
    rules: &[StoppingRule],
    x: &RbmState,
    xo: &StepOutcome,
    y: Option<(&RbmState, &StepOutcome)>,
) -> bool {
    rules.iter().any(|rule| match *rule {
        StoppingRule::FixedTime(t) => time_reached(x.clock, t),
        StoppingRule::LocalTimeX(b) => xo.reflected && x.local_time >= b,
        StoppingRule::LocalTimeEither(b) => {
            (xo.reflected && x.local_time >= b)
                || y.is_some_and(|(ys, yo)| yo.reflected && ys.local_time >= b)
        }
        StoppingRule::HitSphere => xo.reflected,
        StoppingRule::EscapeRadius(r) => x.position.norm() >= r,
    })
}

/// Result of one move of `N` synchronously driven processes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Move<const N: usize> {
    pub outcome: [StepOutcome; N],
}

/// Advances processes that share one driving Brownian motion.
pub(crate) struct Driver<'g> {
    geom: &'g DomainGeometry,
    dt: f64,
    jump_threshold: Option<f64>,
    max_steps: u64,
    pub(crate) moves: u64,
    src: NoiseSource,
}

impl<'g> Driver<'g> {
    pub fn new(geom: &'g DomainGeometry, cfg: &SimConfig, noise: NoiseStream) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            geom,
            dt: cfg.dt,
            jump_threshold: cfg.jump_radius_threshold(),
            max_steps: cfg.max_steps,
            moves: 0,
            src: noise.source(),
        })
    }

    fn charge(&mut self) -> Result<()> {
        if self.moves >= self.max_steps {
            return Err(Error::BudgetExceeded(self.max_steps));
        }
        self.moves += 1;
        Ok(())
    }

    /// One move. `cap` limits the elapsed time (and disables jumps) when a
    /// fixed horizon is pending.
    pub fn advance<const N: usize>(
        &mut self,
        states: &mut [RbmState; N],
        cap: Option<f64>,
    ) -> Result<Move<N>> {
        self.charge()?;
        let mut outcome = [StepOutcome::default(); N];
        if cap.is_none() {
            if let Some(thr) = self.jump_threshold {
                let radius = states
                    .iter()
                    .map(|s| self.geom.free_radius(&s.position.coords()))
                    .fold(f64::INFINITY, f64::min);
                if radius > thr {
                    let disp = self.src.direction() * radius;
                    let elapsed = radius * radius * exit_time::quantile(self.src.uniform());
                    for s in states.iter_mut() {
                        s.position = TorusPoint::from_canonical(self.geom.wrap(s.position.coords() + disp));
                        s.clock += elapsed;
                    }
                    return Ok(Move { outcome });
                }
            }
        }
        let dt = cap.map_or(self.dt, |c| c.min(self.dt));
        let inc = self.src.increment(dt);
        for (s, o) in states.iter_mut().zip(outcome.iter_mut()) {
            let (pos, dl) = reflect(&s.position.coords(), &inc, self.geom)?;
            debug_assert!(pos.norm() >= 1.0 - 1e-12);
            s.position = TorusPoint::from_canonical(pos);
            s.local_time += dl;
            s.clock += dt;
            *o = StepOutcome {
                reflected: dl > 0.0,
                dl,
            };
        }
        Ok(Move { outcome })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub position: Vec3,
    pub local_time: f64,
    /// Whether a boundary contact happened since the previous sample.
    pub contact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub record_every: u64,
    pub samples: Vec<TraceSample>,
}

impl Trace {
    /// Per-step boundary flags are only exact when every move was recorded.
    pub fn has_boundary_flags(&self) -> bool {
        self.record_every == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub state: RbmState,
    pub trace: Option<Trace>,
    pub moves: u64,
    /// Local time added on the final move (overshoot bound for local-time rules).
    pub last_dl: f64,
}

/// Runs a single reflected Brownian motion from `x0` until any rule fires.
pub fn simulate(
    x0: Vec3,
    noise: NoiseStream,
    rules: &[StoppingRule],
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<Simulation> {
    if rules.is_empty() {
        return Err(invalid("at least one stopping rule is required"));
    }
    for r in rules {
        r.validate(geom)?;
    }
    let mut driver = Driver::new(geom, cfg, noise)?;
    let mut states = [RbmState::start(x0, geom)?];
    let horizon = fixed_time(rules);
    let mut trace = cfg.record_every.map(|k| Trace {
        record_every: k,
        samples: vec![TraceSample {
            t: 0.0,
            position: states[0].position.coords(),
            local_time: 0.0,
            contact: false,
        }],
    });

    let initial_stop = horizon.is_some_and(|t| time_reached(0.0, t))
        || rules.iter().any(|r| {
            matches!(r, StoppingRule::EscapeRadius(rad) if states[0].position.norm() >= *rad)
        });
    if initial_stop {
        return Ok(Simulation {
            state: states[0],
            trace,
            moves: 0,
            last_dl: 0.0,
        });
    }

    let mut contact_since_sample = false;
    loop {
        let cap = horizon.map(|t| t - states[0].clock);
        let mv = driver.advance(&mut states, cap)?;
        contact_since_sample |= mv.outcome[0].reflected;
        let done = rules_fire(rules, &states[0], &mv.outcome[0], None);
        if let Some(tr) = trace.as_mut() {
            if driver.moves % tr.record_every == 0 || done {
                tr.samples.push(TraceSample {
                    t: states[0].clock,
                    position: states[0].position.coords(),
                    local_time: states[0].local_time,
                    contact: contact_since_sample,
                });
                contact_since_sample = false;
            }
        }
        if done {
            return Ok(Simulation {
                state: states[0],
                trace,
                moves: driver.moves,
                last_dl: mv.outcome[0].dl,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub t: f64,
    pub x: Vec3,
    pub y: Vec3,
    pub lx: f64,
    pub ly: f64,
    /// Minimal-image distance `R_t`.
    pub r: f64,
}

impl PairSample {
    /// `M_t = log R_t`.
    pub fn log_r(&self) -> f64 {
        self.r.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    pub x: RbmState,
    pub y: RbmState,
    pub samples: Vec<PairSample>,
    pub record_every: Option<u64>,
    pub moves: u64,
}

pub(crate) fn pair_sample(geom: &DomainGeometry, s: &[RbmState; 2]) -> PairSample {
    let x = s[0].position.coords();
    let y = s[1].position.coords();
    PairSample {
        t: s[0].clock,
        x,
        y,
        lx: s[0].local_time,
        ly: s[1].local_time,
        r: geom.diff(&x, &y).norm(),
    }
}

/// Runs the synchronous coupling `(X, Y)` driven by one noise stream. Rules
/// other than `LocalTimeEither` refer to `X`.
pub fn simulate_pair(
    x0: Vec3,
    y0: Vec3,
    noise: NoiseStream,
    rules: &[StoppingRule],
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<CoupledPath> {
    if rules.is_empty() {
        return Err(invalid("at least one stopping rule is required"));
    }
    for r in rules {
        r.validate(geom)?;
    }
    let mut driver = Driver::new(geom, cfg, noise)?;
    let mut states = [RbmState::start(x0, geom)?, RbmState::start(y0, geom)?];
    let horizon = fixed_time(rules);
    let mut samples = Vec::new();
    if cfg.record_every.is_some() {
        samples.push(pair_sample(geom, &states));
    }
    if horizon.is_some_and(|t| time_reached(0.0, t)) {
        return Ok(CoupledPath {
            x: states[0],
            y: states[1],
            samples,
            record_every: cfg.record_every,
            moves: 0,
        });
    }
    loop {
        let cap = horizon.map(|t| t - states[0].clock);
        let mv = driver.advance(&mut states, cap)?;
        let done = rules_fire(
            rules,
            &states[0],
            &mv.outcome[0],
            Some((&states[1], &mv.outcome[1])),
        );
        if let Some(k) = cfg.record_every {
            if driver.moves % k == 0 || done {
                samples.push(pair_sample(geom, &states));
            }
        }
        if done {
            return Ok(CoupledPath {
                x: states[0],
                y: states[1],
                samples,
                record_every: cfg.record_every,
                moves: driver.moves,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitOutcome {
    Hit(Vec3),
    Escaped,
}

/// Unreflected Brownian motion from `x0` until it reaches the unit sphere or
/// (in free space) radius `far_radius`. The crossing inside the final Euler
/// step is located on the straight-line interpolant of that step.
pub fn first_hit_or_escape(
    x0: Vec3,
    noise: NoiseStream,
    far_radius: Option<f64>,
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<HitOutcome> {
    let mut src = noise.source();
    first_hit_with(x0, &mut src, far_radius, geom, cfg)
}

pub(crate) fn first_hit_with(
    x0: Vec3,
    src: &mut NoiseSource,
    far_radius: Option<f64>,
    geom: &DomainGeometry,
    cfg: &SimConfig,
) -> Result<HitOutcome> {
    cfg.validate()?;
    if geom.is_torus() && far_radius.is_some() {
        return Err(invalid("far radius only applies in exterior free space"));
    }
    if !geom.is_torus() && far_radius.is_none() {
        return Err(invalid("exterior free space needs a far radius"));
    }
    let mut x = geom.canonicalize(x0)?.coords();
    if x.norm() <= 1.0 {
        return Err(Error::InsideObstacle { radius: x.norm() });
    }
    let far = far_radius.unwrap_or(f64::INFINITY);
    let thr = cfg.jump_radius_threshold();
    let mut moves = 0u64;
    loop {
        let r = x.norm();
        if r >= far {
            return Ok(HitOutcome::Escaped);
        }
        if moves >= cfg.max_steps {
            return Err(Error::BudgetExceeded(cfg.max_steps));
        }
        moves += 1;
        let gap = r - 1.0;
        if thr.is_some_and(|t| gap > t) {
            x = geom.wrap(x + src.direction() * gap);
            continue;
        }
        let inc = src.increment(cfg.dt);
        let end = x + inc;
        if end.norm() <= 1.0 {
            return Ok(HitOutcome::Hit(segment_sphere_entry(&x, &inc)));
        }
        x = geom.wrap(end);
    }
}

/// First point where `x + s*d`, `s` in `[0, 1]`, meets the unit sphere,
/// given `|x| > 1 >= |x + d|`.
fn segment_sphere_entry(x: &Vec3, d: &Vec3) -> Vec3 {
    let a = d.norm_squared();
    let b = 2.0 * x.dot(d);
    let c = x.norm_squared() - 1.0;
    let disc = (b * b - 4.0 * a * c).max(0.0);
    // smaller root, written to avoid cancellation (b < 0 on entry)
    let s = (2.0 * c / (-b + disc.sqrt())).clamp(0.0, 1.0);
    let p = x + d * s;
    p / p.norm()
}
