//! Batch front end: configuration merging, experiment dispatch and output
//! files (`summary.json`, `manifest.json`, CSV data).
//!
//! Precedence: built-in defaults < `--config` file < command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::coupling::{check_flow_derivative, DEFAULT_C4};
use crate::error::Error;
use crate::excursion::{validate_harmonic, HfParams, DEFAULT_DELTA, DEFAULT_EPS_CUT, DEFAULT_FAR_RADIUS, DT_DIVISOR};
use crate::exponent::{closed_forms, estimate_lambda, integral_i1, integral_i1_cos, integral_i2, integral_i2_cos, reference_frame, QuadratureResult, Rho};
use crate::flow::{
    earthworm_frame, empirical_measure, evolve_ensemble, init_lattice, pair_distance_histogram, uniformity_metric,
    uniformity_trend, HistogramSpec,
};
use crate::geometry::Vec3;
use crate::noise::NoiseStream;
use crate::sde::{SimConfig, DEFAULT_MAX_STEPS};
use crate::stats::{fan_out, Z_99_ONE_SIDED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_UNKNOWN_EXPERIMENT: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub const THREADS_ENV: &str = "RBM_LAB_THREADS";

/// JSON schema of the configuration file.
pub const CONFIG_SCHEMA: &str = include_str!("../schema/config.schema.json");

#[derive(Debug, Parser)]
#[command(name = "rbm-lab", version, about = "Reflected Brownian motion experiments around a spherical obstacle")]
pub struct Cli {
    /// quad, lambda, couple, flow or validate-harmonic
    pub experiment: Option<String>,
    #[arg(long = "experiment", value_name = "NAME")]
    pub experiment_flag: Option<String>,
    /// JSON configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Torus half-side, or "inf" for free space
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of runs or replicas
    #[arg(long = "N", value_name = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Quad,
    Lambda,
    Couple,
    Flow,
    ValidateHarmonic,
}

impl Experiment {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "quad" => Some(Self::Quad),
            "lambda" => Some(Self::Lambda),
            "couple" => Some(Self::Couple),
            "flow" => Some(Self::Flow),
            "validate-harmonic" => Some(Self::ValidateHarmonic),
            _ => None,
        }
    }

    fn default_rho(self) -> RhoSpec {
        match self {
            Self::Lambda => RhoSpec::Num(16.0),
            Self::Couple => RhoSpec::Num(8.0),
            Self::Flow => RhoSpec::Num(4.0),
            Self::Quad | Self::ValidateHarmonic => RhoSpec::Inf("inf".into()),
        }
    }
}

/// `rho` as written in a config: a number or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Num(f64),
    Inf(String),
}

impl RhoSpec {
    fn resolve(&self) -> Result<Rho, String> {
        match self {
            RhoSpec::Num(r) if *r == f64::INFINITY => Ok(Rho::Infinite),
            RhoSpec::Num(r) => Ok(Rho::Finite(*r)),
            RhoSpec::Inf(s) => s.parse::<Rho>().map_err(|e| e.to_string()),
        }
    }

    fn from_flag(s: &str) -> Self {
        match s.parse::<f64>() {
            Ok(r) => RhoSpec::Num(r),
            Err(_) => RhoSpec::Inf(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaBlock {
    pub far_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleBlock {
    /// Initial separation of the tangentially aligned pair.
    pub sep: Option<f64>,
    /// Ladder segments per replica.
    pub k: Option<usize>,
    /// Replicas of the finite-difference derivative check (0 skips it).
    pub fd_replicas: Option<usize>,
    pub fd_b: Option<f64>,
    pub c4: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBlock {
    pub n_per_axis: Option<usize>,
    pub n_bins: Option<usize>,
    pub snapshot_times: Option<Vec<f64>>,
    pub pair_t: Option<f64>,
    pub pair_dt: Option<f64>,
    pub pair_sep: Option<f64>,
    pub hist_bins: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicBlock {
    pub eps_cut: Option<f64>,
    pub far_radius: Option<f64>,
}

/// Configuration as read from a file and overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub rho: Option<RhoSpec>,
    pub dt: Option<f64>,
    pub delta: Option<f64>,
    pub b: Option<f64>,
    pub eps: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub lambda: LambdaBlock,
    #[serde(default)]
    pub couple: CoupleBlock,
    #[serde(default)]
    pub flow: FlowBlock,
    #[serde(default)]
    pub harmonic: HarmonicBlock,
}

/// Failure of a CLI run, carrying its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(m: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: m.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded(_) | Error::QuadratureBudget { .. } => EXIT_BUDGET,
            Error::InvalidParameter(_)
            | Error::InvalidGeometry(_)
            | Error::NotOnBoundary { .. }
            | Error::InsideObstacle { .. }
            | Error::NonFinite(_)
            | Error::SingularPair
            | Error::MissingBoundaryFlags => EXIT_VALIDATION,
            Error::DegenerateIncrement => EXIT_OTHER,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    /// Applies command-line overrides on top of `self`.
    pub fn merge_flags(mut self, cli: &Cli) -> CliResult<Self> {
        match (&cli.experiment, &cli.experiment_flag) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::validation(format!("conflicting experiments {a:?} and {b:?}")))
            }
            (Some(e), _) | (None, Some(e)) => self.experiment = Some(e.clone()),
            (None, None) => {}
        }
        if let Some(r) = &cli.rho {
            self.rho = Some(RhoSpec::from_flag(r));
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if cli.$f.is_some() { self.$f = cli.$f.clone(); } )* };
        }
        over!(dt, delta, b, eps, n, seed, threads, tol);
        if let Some(o) = &cli.out {
            self.output_dir = Some(o.clone());
        }
        Ok(self)
    }
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::validation(format!("{name} must be positive, got {v}")))
    }
}

/// Fully resolved configuration, written verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub experiment: Experiment,
    pub rho: Value,
    pub dt: Option<f64>,
    pub delta: f64,
    pub b: f64,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub tol: f64,
    pub max_steps: u64,
    pub far_radius: f64,
    pub sep: f64,
    pub k: usize,
    pub fd_replicas: usize,
    pub fd_b: f64,
    pub c4: Vec<f64>,
    pub n_per_axis: usize,
    pub n_bins: usize,
    pub snapshot_times: Vec<f64>,
    pub pair_t: f64,
    pub pair_dt: f64,
    pub pair_sep: f64,
    pub hist_bins: usize,
    pub threshold: f64,
    pub eps_cut: f64,
    #[serde(skip)]
    rho_value: Option<Rho>,
}

impl Resolved {
    pub fn rho(&self) -> Rho {
        self.rho_value.unwrap_or(Rho::Infinite)
    }
}

/// Checks and completes a configuration. Fails with status 4 for an unknown
/// experiment and status 2 for any other problem.
pub fn resolve(cfg: &ExperimentConfig) -> CliResult<Resolved> {
    let name = cfg
        .experiment
        .as_deref()
        .ok_or_else(|| CliError::validation("no experiment given"))?;
    let experiment = Experiment::parse(name).ok_or_else(|| CliError {
        code: EXIT_UNKNOWN_EXPERIMENT,
        message: format!("unknown experiment {name:?}; expected quad, lambda, couple, flow or validate-harmonic"),
    })?;
    let rho_spec = cfg.rho.clone().unwrap_or_else(|| experiment.default_rho());
    let rho = rho_spec.resolve().map_err(CliError::validation)?;
    rho.geometry().map_err(CliError::from)?;
    if matches!(experiment, Experiment::Couple | Experiment::Flow) && rho == Rho::Infinite {
        return Err(CliError::validation("couple and flow need a finite torus rho"));
    }

    let n_default = match experiment {
        Experiment::Lambda => 1_000_000,
        Experiment::ValidateHarmonic => 100_000,
        Experiment::Couple => 200,
        _ => 1,
    };
    let n = cfg.n.unwrap_or(n_default);
    if n == 0 && experiment != Experiment::Quad {
        return Err(CliError::validation("N must be positive"));
    }
    let threads = cfg.threads.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::validation("threads must be positive"));
    }
    let tol = cfg.tol.unwrap_or(1e-8);
    positive("tol", tol)?;
    if let Some(dt) = cfg.dt {
        positive("dt", dt)?;
    }
    let delta = positive("delta", cfg.delta.unwrap_or(DEFAULT_DELTA))?;
    let b = cfg.b.unwrap_or(5.0);
    if !(b.is_finite() && b >= 0.0) {
        return Err(CliError::validation(format!("b must be >= 0, got {b}")));
    }
    let eps = positive("eps", cfg.eps.unwrap_or(1e-4))?;
    let max_steps = cfg.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
    if max_steps == 0 {
        return Err(CliError::validation("max_steps must be positive"));
    }
    let far_radius = match experiment {
        Experiment::ValidateHarmonic => cfg.harmonic.far_radius,
        _ => cfg.lambda.far_radius,
    }
    .unwrap_or(DEFAULT_FAR_RADIUS);
    positive("far_radius", far_radius)?;

    let c4 = cfg.couple.c4.clone().unwrap_or_else(|| vec![DEFAULT_C4]);
    if c4.is_empty() {
        return Err(CliError::validation("c4 list must not be empty"));
    }
    for c in &c4 {
        positive("c4", *c)?;
    }
    let snapshot_times = cfg
        .flow
        .snapshot_times
        .clone()
        .unwrap_or_else(|| (0..=10).map(|i| 5.0 * i as f64).collect());
    if snapshot_times.is_empty() || snapshot_times.windows(2).any(|w| !(w[1] > w[0])) || snapshot_times[0] < 0.0 {
        return Err(CliError::validation("snapshot_times must be non-negative and strictly increasing"));
    }
    let n_per_axis = cfg.flow.n_per_axis.unwrap_or(16);
    let n_bins = cfg.flow.n_bins.unwrap_or(8);
    let hist_bins = cfg.flow.hist_bins.unwrap_or(60);
    if n_per_axis < 2 || n_bins < 2 || hist_bins < 2 {
        return Err(CliError::validation("n_per_axis, n_bins and hist_bins must be at least 2"));
    }
    let eps_cut = cfg.harmonic.eps_cut.unwrap_or(DEFAULT_EPS_CUT);
    if !(eps_cut > 0.0 && eps_cut <= 2.0) {
        return Err(CliError::validation(format!("eps_cut must lie in (0, 2], got {eps_cut}")));
    }

    Ok(Resolved {
        experiment,
        rho: match rho {
            Rho::Finite(r) => json!(r),
            Rho::Infinite => json!("inf"),
        },
        dt: cfg.dt,
        delta,
        b,
        eps,
        n,
        seed: cfg.seed.unwrap_or(0),
        threads,
        output_dir: cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        tol,
        max_steps,
        far_radius,
        sep: positive("sep", cfg.couple.sep.unwrap_or(1e-4))?,
        k: cfg.couple.k.unwrap_or(1).max(1),
        fd_replicas: cfg.couple.fd_replicas.unwrap_or(0),
        fd_b: cfg.couple.fd_b.unwrap_or(0.5),
        c4,
        n_per_axis,
        n_bins,
        snapshot_times,
        pair_t: positive("pair_t", cfg.flow.pair_t.unwrap_or(5e4))?,
        pair_dt: positive("pair_dt", cfg.flow.pair_dt.unwrap_or(1e-8))?,
        pair_sep: positive("pair_sep", cfg.flow.pair_sep.unwrap_or(0.1))?,
        hist_bins,
        threshold: positive("threshold", cfg.flow.threshold.unwrap_or(crate::flow::DEFAULT_COLLAPSE_THRESHOLD))?,
        eps_cut,
        rho_value: Some(rho),
    })
}

/// `{value, stderr}` for Monte Carlo quantities.
fn mc(value: f64, stderr: f64) -> Value {
    json!({ "value": value, "stderr": stderr })
}

/// `{value, exact: true}` for closed forms and counts.
fn exact(value: impl Serialize) -> Value {
    json!({ "value": value, "exact": true })
}

fn quad(r: &QuadratureResult) -> Value {
    json!({ "value": r.value, "error_estimate": r.error_estimate, "evaluations": exact(r.evaluations) })
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, rel: &str) -> CliResult<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn json(&mut self, rel: &str, v: &Value) -> CliResult<()> {
        let p = self.path(rel)?;
        let text = serde_json::to_string_pretty(v).map_err(|e| CliError::validation(e.to_string()))?;
        fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }

    fn csv(&mut self, rel: &str, write: impl FnOnce(fs::File) -> crate::Result<()>) -> CliResult<()> {
        let p = self.path(rel)?;
        let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        write(f).map_err(|e| CliError::io(&p, e))
    }

    fn rows(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let p = self.path(rel)?;
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::io(&p, e))?;
        w.write_record(header).map_err(|e| CliError::io(&p, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| CliError::io(&p, e))?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))
    }
}

fn hf_params(r: &Resolved) -> HfParams {
    HfParams {
        delta: r.delta,
        dt: r.dt,
        n: r.n,
        seed: r.seed,
        threads: r.threads,
        far_radius: r.far_radius,
        max_steps: r.max_steps,
    }
}

fn run_quad(r: &Resolved, _out: &mut Output) -> CliResult<Value> {
    let c = closed_forms();
    let (i1, i2) = (integral_i1(r.tol)?, integral_i2(r.tol)?);
    let (i1c, i2c) = (integral_i1_cos(r.tol)?, integral_i2_cos(r.tol)?);
    Ok(json!({
        "I1": quad(&i1),
        "I2": quad(&i2),
        "I1_cos_path": quad(&i1c),
        "I2_cos_path": quad(&i2c),
        "I1_exact": exact(c.i1_exact),
        "I2_exact": exact(c.i2_exact),
        "lambda_limit": exact(c.lambda_limit),
        "H_hat_f": exact(c.h_hat_f),
        "tol": exact(r.tol),
    }))
}

fn run_lambda(r: &Resolved, out: &mut Output) -> CliResult<Value> {
    let e = estimate_lambda(r.rho(), &hf_params(r))?;
    let lower = e.lambda_star - Z_99_ONE_SIDED * e.stderr;
    out.rows(
        "lambda.csv",
        &["rho", "lambda", "lambda_star", "stderr", "n_hit", "n_escape"],
        [vec![
            r.rho().to_string(),
            e.lambda.to_string(),
            e.lambda_star.to_string(),
            e.stderr.to_string(),
            e.n_hit.to_string(),
            e.n_escape.to_string(),
        ]],
    )?;
    Ok(json!({
        "lambda": mc(e.lambda, e.stderr),
        "lambda_star": mc(e.lambda_star, e.stderr),
        "lambda_star_lower_99": mc(lower, e.stderr),
        "lambda_star_positive_99": lower > 0.0,
        "n_hit": exact(e.n_hit),
        "n_escape": exact(e.n_escape),
        "dt": exact(e.params.resolved_dt()),
        "lambda_limit": exact(closed_forms().lambda_limit),
    }))
}

fn run_couple(r: &Resolved, out: &mut Output) -> CliResult<Value> {
    let geom = r.rho().geometry()?;
    let dt = r.dt.unwrap_or((r.sep / 3.0).powi(2));
    let cfg = SimConfig::with_dt(dt).with_max_steps(r.max_steps);
    let (x0, y0) = crate::coupling::aligned_pair(r.sep);
    let ladders = fan_out(r.n, r.threads, |i| {
        crate::coupling::log_separation_ladder(x0, y0, r.b, r.k, NoiseStream::replica(r.seed, i as u64), &geom, &cfg)
    })?;
    let mut rows = Vec::new();
    let mut incs = Vec::new();
    for (i, l) in ladders.into_iter().enumerate() {
        let l = l?;
        out.csv(&format!("ladders/replica_{i:05}.csv"), |f| l.write_csv(f))?;
        let last = l.points.last().map_or(f64::NAN, |p| p.v);
        if l.complete {
            incs.push(l.points[1].v - l.points[0].v);
        }
        rows.push(vec![
            i.to_string(),
            l.points.len().saturating_sub(1).to_string(),
            l.complete.to_string(),
            l.points[0].v.to_string(),
            last.to_string(),
        ]);
    }
    out.rows("ladder_summary.csv", &["replica", "segments", "complete", "V_0", "V_last"], rows)?;
    let drift = crate::stats::MeanEstimate::from_slice(&incs);
    let mut summary = Map::new();
    summary.insert("drift_V1_minus_V0".into(), mc(drift.mean, drift.stderr));
    summary.insert("drift_positive_95".into(), json!(drift.mean - crate::stats::Z_95_ONE_SIDED * drift.stderr > 0.0));
    summary.insert("complete_replicas".into(), exact(incs.len()));
    summary.insert("dt".into(), exact(dt));

    if r.fd_replicas > 0 {
        let fd_dt = r.dt.unwrap_or((r.eps / 2.0 / DT_DIVISOR).powi(2));
        let fd_cfg = SimConfig::with_dt(fd_dt).with_max_steps(r.max_steps);
        let (x, v) = reference_frame();
        let mut rows = Vec::new();
        let mut improved = vec![0usize; r.c4.len()];
        for i in 0..r.fd_replicas {
            let s = NoiseStream::replica(r.seed ^ 0xF0F0, i as u64);
            let a = check_flow_derivative(&x, &v, r.eps, r.fd_b, &r.c4, s, &geom, &fd_cfg)?;
            let h = check_flow_derivative(&x, &v, r.eps / 2.0, r.fd_b, &r.c4, s, &geom, &fd_cfg)?;
            for (j, (ca, ch)) in a.iter().zip(&h).enumerate() {
                improved[j] += (ch.rel_err < ca.rel_err) as usize;
                for c in [ca, ch] {
                    rows.push(vec![
                        i.to_string(),
                        c.eps.to_string(),
                        c.c4.to_string(),
                        c.rel_err.to_string(),
                        c.local_time.to_string(),
                        c.chain_len.to_string(),
                    ]);
                }
            }
        }
        out.rows("flow_derivative.csv", &["replica", "eps", "c4", "rel_err", "local_time", "chain_len"], rows)?;
        let per_c4: Vec<Value> = r
            .c4
            .iter()
            .zip(&improved)
            .map(|(c, k)| json!({ "c4": exact(c), "halving_improved": exact(k), "replicas": exact(r.fd_replicas) }))
            .collect();
        summary.insert("flow_derivative".into(), json!({ "dt": exact(fd_dt), "by_c4": per_c4 }));
    }
    Ok(Value::Object(summary))
}

fn run_flow(r: &Resolved, out: &mut Output) -> CliResult<Value> {
    let geom = r.rho().geometry()?;
    let mut ens = init_lattice(r.n_per_axis, &geom)?;
    let dt = r.dt.unwrap_or(1e-3);
    let snaps = evolve_ensemble(&mut ens, NoiseStream::new(r.seed, 0), &r.snapshot_times, &geom, dt)?;
    let mut chi = Vec::new();
    let mut tv = Vec::new();
    let mut rows = Vec::new();
    for (i, s) in snaps.iter().enumerate() {
        out.csv(&format!("snapshots/snapshot_{i:03}.csv"), |f| s.write_csv(f))?;
        let m = empirical_measure(&s.positions, r.n_bins, &geom)?;
        out.csv(&format!("measures/measure_{i:03}.csv"), |f| m.write_csv(f))?;
        let u = uniformity_metric(&m)?;
        chi.push(u.chi_square);
        tv.push(u.tv_distance);
        rows.push(vec![i.to_string(), s.t.to_string(), u.chi_square.to_string(), u.tv_distance.to_string()]);
    }
    out.rows("uniformity.csv", &["snapshot", "t", "chi_square", "tv_distance"], rows)?;
    if let Some(last) = snaps.last() {
        let framed = earthworm_frame(&last.positions, &last.driver, &geom)?;
        out.rows(
            "earthworm_final.csv",
            &["particle_id", "x", "y", "z"],
            framed.iter().enumerate().map(|(i, p)| {
                let c = p.coords();
                vec![i.to_string(), c.x.to_string(), c.y.to_string(), c.z.to_string()]
            }),
        )?;
    }

    let x0 = Vec3::new(2.0, 0.0, 0.0);
    let spec = HistogramSpec { n_bins: r.hist_bins, threshold: r.threshold, ..HistogramSpec::default() };
    let h = pair_distance_histogram(
        x0,
        x0 + Vec3::new(0.0, r.pair_sep, 0.0),
        r.pair_t,
        NoiseStream::new(r.seed, 1),
        &geom,
        &SimConfig::with_dt(r.pair_dt).with_max_steps(r.max_steps),
        &spec,
    )?;
    out.rows(
        "pair_histogram.csv",
        &["lo", "hi", "mass"],
        h.mass.iter().enumerate().map(|(i, m)| vec![h.edges[i].to_string(), h.edges[i + 1].to_string(), m.to_string()]),
    )?;
    Ok(json!({
        "particles": exact(ens.particles.len()),
        "dropped": exact(ens.dropped),
        "lattice_spacing": exact(ens.spacing),
        "final_chi_square": exact(chi.last().copied()),
        "final_tv_distance": exact(tv.last().copied()),
        "trend_spearman_chi_square": exact(uniformity_trend(&chi)),
        "trend_spearman_tv": exact(uniformity_trend(&tv)),
        "pair_mass_below_threshold": exact(h.below_threshold),
        "pair_smallest_bin_mass": exact(h.smallest_bin_mass()),
        "pair_threshold": exact(h.threshold),
        "diagnostic_note": "single noise realization: a decreasing trend cannot distinguish convergence to a random limit measure from slow mixing",
    }))
}

fn run_harmonic(r: &Resolved, out: &mut Output) -> CliResult<Value> {
    let geom = r.rho().geometry()?;
    let h = validate_harmonic(&hf_params(r), r.eps_cut, &geom)?;
    out.rows(
        "hits.csv",
        &["alpha", "beta", "chord"],
        h.kept.iter().map(|a| vec![a.alpha.to_string(), a.beta.to_string(), a.chord().to_string()]),
    )?;
    Ok(json!({
        "ks_alpha": exact(h.ks_alpha),
        "ks_beta": exact(h.ks_beta),
        "critical_1pct": exact(h.critical_1pct),
        "pass_1pct": h.pass,
        "n_runs": exact(h.n_runs),
        "n_hits": exact(h.n_hits),
        "n_kept": exact(h.n_kept),
        "eps_cut": exact(h.eps_cut),
    }))
}

/// Runs one resolved experiment and writes its artifacts.
pub fn run(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let r = resolve(cfg)?;
    let started = Instant::now();
    let mut out = Output::new(&r.output_dir)?;
    let results = match r.experiment {
        Experiment::Quad => run_quad(&r, &mut out),
        Experiment::Lambda => run_lambda(&r, &mut out),
        Experiment::Couple => run_couple(&r, &mut out),
        Experiment::Flow => run_flow(&r, &mut out),
        Experiment::ValidateHarmonic => run_harmonic(&r, &mut out),
    }?;
    let summary = json!({
        "experiment": r.experiment,
        "seed": r.seed,
        "results": results,
    });
    out.json("summary.json", &summary)?;
    let unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = json!({
        "config": r,
        "input": cfg,
        "seed": r.seed,
        "stream_split": format!("{:#x}", crate::noise::STREAM_SPLIT),
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "finished_unix": unix,
        "files": out.files.iter().chain(["summary.json".to_string()].iter()).collect::<Vec<_>>(),
    });
    let dir = out.dir.clone();
    out.json("manifest.json", &manifest)?;
    Ok(dir)
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = (|| {
        let base = match &cli.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        run(&base.merge_flags(&cli)?)
    })();
    match outcome {
        Ok(dir) => {
            println!("wrote {}", dir.join("summary.json").display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("rbm-lab: {}", e.message);
            e.code
        }
    }
}
