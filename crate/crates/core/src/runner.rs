//! Configuration loading and the four workflows behind the command line:
//! analyze, solve, verify and evolve. Each workflow has a pure entry point
//! returning its report and a file-writing wrapper used by [`run`].

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{
    self, evolve_cauchy, fit_decay_rate, polish_reference, probe_basin, BasinProbe, Channel, ConvergenceTrace,
    LfScheme,
};
use crate::grid::{field_from_csv, field_to_csv, numerical_gradient, GradientMethod, GridField, Interp};
use crate::oracle::{minimize_action, Convention, OracleConfig};
use crate::phase::graph_invariance_error;
use crate::problem::{PhaseState, Problem, ProblemConfig, Vector, MAX_DIM};
use crate::regime::{self, RegimeReport};
use crate::report::to_json;
use crate::sl::{hj_residual, solve_value_iteration, SlOptions};

/// Scan resolution per axis used when computing the regime constant.
pub const ANALYZE_SCAN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sl,
    Lf,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl" => Ok(Method::Sl),
            "lf" => Ok(Method::Lf),
            other => Err(Error::config("method", format!("expected `sl` or `lf`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Residual,
    Oracle,
    Invariance,
    Bh,
    Continuity,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Residual, Check::Oracle, Check::Invariance, Check::Bh, Check::Continuity];

    pub fn name(self) -> &'static str {
        match self {
            Check::Residual => "residual",
            Check::Oracle => "oracle",
            Check::Invariance => "invariance",
            Check::Bh => "bh",
            Check::Continuity => "continuity",
        }
    }

    /// Parses a comma-separated list; duplicates collapse and order is normalized.
    pub fn parse_list(s: &str) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let c = Check::ALL
                .into_iter()
                .find(|c| c.name() == item)
                .ok_or_else(|| Error::config("checks", format!("unknown check `{item}`")))?;
            out.push(c);
        }
        if out.is_empty() {
            return Err(Error::config("checks", "no checks requested"));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Initial perturbation added to the reference solution in `evolve`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Perturbation {
    /// `δ`
    Const { amplitude: f64 },
    /// `δ · mean_i sin(2π m q_i / L_i)`
    Sine { amplitude: f64, mode: u32 },
}

impl Perturbation {
    pub fn amplitude(&self) -> f64 {
        match *self {
            Perturbation::Const { amplitude } | Perturbation::Sine { amplitude, .. } => amplitude,
        }
    }

    /// The perturbation profile at unit amplitude.
    pub fn shape(&self, prob: &Problem, q: &Vector) -> f64 {
        match *self {
            Perturbation::Const { .. } => 1.0,
            Perturbation::Sine { mode, .. } => {
                let dim = prob.dim();
                (0..dim)
                    .map(|i| (2.0 * std::f64::consts::PI * mode as f64 * q[i] / prob.domain.period(i)).sin())
                    .sum::<f64>()
                    / dim as f64
            }
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::config("perturb", m);
        let parts: Vec<&str> = s.split(':').collect();
        let amp = |x: &str| -> Result<f64> {
            let a: f64 = x.parse().map_err(|_| bad(format!("amplitude `{x}` is not a number")))?;
            if !a.is_finite() || a == 0.0 {
                return Err(bad("amplitude must be finite and nonzero".into()));
            }
            Ok(a)
        };
        match parts.as_slice() {
            ["const", a] => Ok(Perturbation::Const { amplitude: amp(a)? }),
            ["sine", a, m] => {
                let mode: u32 = m.parse().map_err(|_| bad(format!("mode `{m}` is not a positive integer")))?;
                if mode == 0 {
                    return Err(bad("sine mode must be at least 1".into()));
                }
                Ok(Perturbation::Sine { amplitude: amp(a)?, mode })
            }
            _ => Err(bad(format!("expected `const:<amp>` or `sine:<amp>:<mode>`, got `{s}`"))),
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Const { amplitude } => write!(f, "const:{amplitude}"),
            Perturbation::Sine { amplitude, mode } => write!(f, "sine:{amplitude}:{mode}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Analyze {
        out: PathBuf,
    },
    Solve {
        method: Method,
        grid: usize,
        tol: f64,
        out: PathBuf,
        stats: Option<PathBuf>,
    },
    Verify {
        field: PathBuf,
        checks: Vec<Check>,
        out: PathBuf,
    },
    Evolve {
        field: PathBuf,
        perturb: Perturbation,
        horizon: f64,
        out: PathBuf,
        rate: Option<PathBuf>,
    },
}

/// A validated run: problem, command options and seed.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: ProblemConfig,
    pub problem: Problem,
    pub command: Command,
    pub seed: u64,
}

/// Parses a problem configuration. An optional top-level `seed` is returned
/// separately. Errors name the JSON path of the offending value.
pub fn parse_config(text: &str) -> Result<(ProblemConfig, Option<u64>)> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::config("config", format!("invalid JSON: {e}")))?;
    let seed = match value.as_object_mut().and_then(|m| m.remove("seed")) {
        None => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| Error::config("seed", "expected a non-negative integer"))?),
    };
    let config: ProblemConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        let missing = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
            .map(str::to_string);
        let field = match (path.as_str(), missing) {
            (".", Some(name)) => name,
            (".", None) => "config".to_string(),
            (p, Some(name)) => format!("{p}.{name}"),
            (p, None) => p.to_string(),
        };
        Error::config(field, message)
    })?;
    Ok((config, seed))
}

/// Reads and fully validates a problem configuration file.
pub fn load_config(path: &Path) -> Result<(ProblemConfig, Problem, Option<u64>)> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let (config, seed) = parse_config(&text)?;
    let problem = config.build()?;
    Ok((config, problem, seed))
}

impl RunSpec {
    /// Loads the configuration and validates the command options against it.
    /// A `seed` given here overrides one in the file; the default is 0.
    pub fn new(config_path: &Path, command: Command, seed: Option<u64>) -> Result<Self> {
        let (config, problem, file_seed) = load_config(config_path)?;
        match &command {
            Command::Analyze { .. } => {}
            Command::Solve { grid, tol, .. } => {
                if *grid < 8 {
                    return Err(Error::config("grid", format!("need at least 8 nodes per axis, got {grid}")));
                }
                if !(*tol > 0.0 && tol.is_finite()) {
                    return Err(Error::config("tol", "tolerance must be positive"));
                }
            }
            Command::Verify { field, checks, .. } => {
                require_file("field", field)?;
                if checks.is_empty() {
                    return Err(Error::config("checks", "no checks requested"));
                }
            }
            Command::Evolve { field, horizon, .. } => {
                require_file("field", field)?;
                if !(*horizon > 0.0 && horizon.is_finite()) {
                    return Err(Error::config("T", "horizon must be positive"));
                }
            }
        }
        Ok(Self {
            config,
            problem,
            command,
            seed: seed.or(file_seed).unwrap_or(0),
        })
    }
}

fn require_file(field: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(field, format!("{} does not exist", path.display())))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Reads a field dump for the problem's domain.
pub fn read_field(prob: &Problem, path: &Path) -> Result<GridField> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    field_from_csv(&prob.domain, BufReader::new(file))
}

/// Executes a run and writes its outputs. A verification run that completes
/// but fails a check writes its report and then returns [`Error::Verification`].
pub fn run(spec: &RunSpec) -> Result<()> {
    let prob = &spec.problem;
    match &spec.command {
        Command::Analyze { out } => write_file(out, &to_json(&analyze(prob))),
        Command::Solve {
            method,
            grid,
            tol,
            out,
            stats,
        } => {
            let nodes = vec![*grid; prob.dim()];
            let (field, report) = solve(prob, *method, &nodes, *tol)?;
            let grad = numerical_gradient(&field, GradientMethod::Centered);
            write_file(out, &field_to_csv(&field, &grad))?;
            if let Some(stats) = stats {
                write_file(stats, &to_json(&report))?;
            }
            Ok(())
        }
        Command::Verify { field, checks, out } => {
            let u = read_field(prob, field)?;
            let report = verify(prob, &u, checks, spec.seed)?;
            write_file(out, &to_json(&report))?;
            if report.passed {
                Ok(())
            } else {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                Err(Error::Verification(format!("failed checks: {}", failed.join(", "))))
            }
        }
        Command::Evolve {
            field,
            perturb,
            horizon,
            out,
            rate,
        } => {
            let u = read_field(prob, field)?;
            let (trace, report) = evolve(prob, &u, *perturb, *horizon)?;
            write_file(out, &trace.to_csv())?;
            if let Some(rate) = rate {
                write_file(rate, &to_json(&report))?;
            }
            Ok(())
        }
    }
}

// ---- analyze ----

pub fn analyze(prob: &Problem) -> RegimeReport {
    regime::analyze(prob, ANALYZE_SCAN)
}

// ---- solve ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub nodes_per_axis: Vec<usize>,
    pub tol: f64,
    pub iterations: usize,
    pub residual_inf: f64,
    /// Last sup-norm change between iterates (value iteration only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_sup_change: Option<f64>,
    /// Operator time step (value iteration only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_dpp: Option<f64>,
    /// Numerical dissipation per axis (explicit scheme only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

pub fn solve(prob: &Problem, method: Method, nodes_per_axis: &[usize], tol: f64) -> Result<(GridField, SolveReport)> {
    match method {
        Method::Sl => {
            let opts = SlOptions { tol, ..SlOptions::default() };
            let (u, stats) = solve_value_iteration(prob, nodes_per_axis, &opts)?;
            Ok((
                u,
                SolveReport {
                    method,
                    nodes_per_axis: nodes_per_axis.to_vec(),
                    tol,
                    iterations: stats.iterations,
                    residual_inf: stats.residual_inf,
                    final_sup_change: Some(stats.final_sup_change),
                    dt_dpp: Some(stats.dt_dpp),
                    sigma: None,
                },
            ))
        }
        Method::Lf => {
            let (u, scheme, steps) = evolve::solve_steady_state(prob, nodes_per_axis, tol)?;
            let residual_inf = hj_residual(prob, &u, GradientMethod::Centered);
            Ok((
                u,
                SolveReport {
                    method,
                    nodes_per_axis: nodes_per_axis.to_vec(),
                    tol,
                    iterations: steps,
                    residual_inf,
                    final_sup_change: None,
                    dt_dpp: None,
                    sigma: Some(scheme.sigma[..prob.dim()].to_vec()),
                },
            ))
        }
    }
}

// ---- verify ----

/// Residual threshold per unit of grid spacing (5e-3 at h = 1/256).
pub const RESIDUAL_PER_H: f64 = 1.28;
/// Absolute part of the oracle agreement threshold; the truncation tail bound is added.
pub const ORACLE_GAP: f64 = 5e-3;
pub const INVARIANCE_PER_H: f64 = 10.0;
pub const BH_PER_H: f64 = 10.0;
pub const CONTINUITY_FRACTION: f64 = 0.05;
/// Factor applied to α and to the potential amplitudes by the continuity probe.
pub const CONTINUITY_SCALE: f64 = 1.01;
pub const INVARIANCE_STARTS: usize = 20;
pub const INVARIANCE_HORIZON: f64 = 2.0;
pub const INVARIANCE_DT: f64 = 1e-3;

/// One oracle comparison point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePoint {
    pub q: Vec<f64>,
    pub u_sl: f64,
    pub u_oracle: f64,
    pub gap: f64,
    pub tail_bound: f64,
    pub convention: Convention,
    pub velocity_bound_binding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<OraclePoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub nodes_per_axis: Vec<usize>,
    pub h: f64,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

fn check(name: Check, value: f64, threshold: f64, upper: bool) -> CheckResult {
    let passed = value.is_finite() && if upper { value <= threshold } else { value >= threshold };
    CheckResult {
        name: name.name().to_string(),
        value,
        threshold,
        passed,
        points: None,
        note: None,
    }
}

/// Sample points of the oracle check: the origin, the quarter and the half diagonal.
pub fn oracle_points(prob: &Problem) -> Vec<Vector> {
    let dim = prob.dim();
    [0.0, 0.25, 0.5]
        .iter()
        .map(|f| std::array::from_fn(|i| if i < dim { f * prob.domain.period(i) } else { 0.0 }))
        .collect()
}

/// Launch positions of the invariance check, spread over the torus
/// (evenly in 1D, along a golden-ratio lattice in 2D).
pub fn invariance_starts(prob: &Problem, count: usize) -> Vec<Vector> {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    (0..count)
        .map(|k| {
            let t = k as f64 / count as f64;
            let mut q = [0.0; MAX_DIM];
            q[0] = t * prob.domain.period(0);
            if prob.dim() == 2 {
                q[1] = (k as f64 * golden).fract() * prob.domain.period(1);
            }
            q
        })
        .collect()
}

/// Runs the requested checks on a solved field.
pub fn verify(prob: &Problem, u: &GridField, checks: &[Check], seed: u64) -> Result<VerifyReport> {
    if u.dim() != prob.dim() {
        return Err(Error::config("field", "field dimension does not match the problem"));
    }
    let h = u.max_spacing();
    let mut results = Vec::with_capacity(checks.len());
    for &c in checks {
        let result = match c {
            Check::Residual => {
                let r = hj_residual(prob, u, GradientMethod::Centered);
                check(c, r, RESIDUAL_PER_H * h, true)
            }
            Check::Oracle => oracle_check(prob, u, seed)?,
            Check::Invariance => {
                let starts = invariance_starts(prob, INVARIANCE_STARTS);
                let devs: Vec<f64> = starts
                    .par_iter()
                    .map(|q| graph_invariance_error(prob, u, q, INVARIANCE_DT, INVARIANCE_HORIZON))
                    .collect::<Result<_>>()?;
                let worst = devs.into_iter().fold(0.0, f64::max);
                check(c, worst, INVARIANCE_PER_H * h, true)
            }
            Check::Bh => check(c, min_bh_margin(prob, u), -BH_PER_H * h, false),
            Check::Continuity => continuity_check(prob, u)?,
        };
        results.push(result);
    }
    Ok(VerifyReport {
        passed: results.iter().all(|r| r.passed),
        nodes_per_axis: u.nodes_per_axis().to_vec(),
        h,
        seed,
        checks: results,
    })
}

/// Smallest `b_h_margin` over the graph of the field's centered gradient at the nodes.
pub fn min_bh_margin(prob: &Problem, u: &GridField) -> f64 {
    let grad = numerical_gradient(u, GradientMethod::Centered);
    (0..u.len())
        .map(|idx| {
            let q = u.position(idx);
            let p: Vector = std::array::from_fn(|a| grad.get(a).map_or(0.0, |g| g.values()[idx]));
            prob.b_h_margin(&PhaseState { q, p })
        })
        .fold(f64::INFINITY, f64::min)
}

/// Oracle configuration used by verification: horizon `4/α`, 400 segments, 5 restarts.
pub fn verify_oracle_config(prob: &Problem, seed: u64) -> OracleConfig {
    OracleConfig::new(4.0 / prob.alpha, 400, 5, Convention::Canonical, seed)
}

fn oracle_check(prob: &Problem, u: &GridField, seed: u64) -> Result<CheckResult> {
    let cfg = verify_oracle_config(prob, seed);
    let cubic = u.clone().with_interp(Interp::Cubic);
    let dim = prob.dim();
    let mut points = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for q in oracle_points(prob) {
        let res = minimize_action(prob, &q, &cfg)?;
        let u_sl = cubic.interpolate(&q);
        let gap = (u_sl - res.u_estimate).abs();
        worst_excess = worst_excess.max(gap - res.tail_bound);
        worst_gap = worst_gap.max(gap);
        tail = tail.max(res.tail_bound);
        points.push(OraclePoint {
            q: q[..dim].to_vec(),
            u_sl,
            u_oracle: res.u_estimate,
            gap,
            tail_bound: res.tail_bound,
            convention: cfg.convention,
            velocity_bound_binding: res.velocity_bound_binding,
        });
    }
    let mut result = check(Check::Oracle, worst_gap, ORACLE_GAP + tail, true);
    result.passed = worst_excess <= ORACLE_GAP;
    if points.iter().any(|p| p.velocity_bound_binding) {
        result.note = Some("the search velocity bound was reached; the oracle value may be inaccurate".into());
    }
    result.points = Some(points);
    Ok(result)
}

fn continuity_check(prob: &Problem, u: &GridField) -> Result<CheckResult> {
    let nodes = u.nodes_per_axis().to_vec();
    let opts = SlOptions {
        tol: 1e-10,
        ..SlOptions::default()
    };
    let scaled = prob.rescaled(CONTINUITY_SCALE, CONTINUITY_SCALE)?;
    let (base, _) = solve_value_iteration(prob, &nodes, &opts)?;
    let (moved, _) = solve_value_iteration(&scaled, &nodes, &opts)?;
    let delta = moved.sup_distance(&base);
    let mut result = check(
        Check::Continuity,
        delta,
        CONTINUITY_FRACTION * base.sup_norm().max(1e-3),
        true,
    );
    result.note = Some(format!(
        "re-solved on the field's grid with alpha and potential amplitudes scaled by {CONTINUITY_SCALE}; \
         baseline differs from the supplied field by {:.3e}",
        base.sup_distance(u)
    ));
    Ok(result)
}

// ---- evolve ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub channel: Channel,
    pub window: [f64; 2],
    /// `None` when too few samples lie above the noise floor.
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolveReport {
    pub perturbation: Perturbation,
    pub alpha: f64,
    pub horizon: f64,
    pub dt: f64,
    pub sigma: Vec<f64>,
    /// Sup distance between the supplied field and the scheme's nearby fixed point.
    pub reference_shift: f64,
    pub value: RateFit,
    pub grad: RateFit,
    /// Whether `grad_error` strictly decreases at every sample with `t ≥ 1/α`
    /// among samples above the noise floor.
    pub grad_decreasing_after_relaxation: bool,
    pub basin: Vec<BasinProbe>,
}

/// Amplitudes tried by the basin probe.
pub const BASIN_AMPLITUDES: [f64; 3] = [0.01, 0.1, 1.0];
/// Trace samples per run (approximate).
const TRACE_SAMPLES: usize = 400;
/// Errors at or below this level are treated as roundoff.
const NOISE_FLOOR: f64 = 1e-11;
/// Initial channel errors at or below this level mean the perturbation left the channel untouched.
const EXCITATION_FLOOR: f64 = 1e-9;

/// Perturbs the field, evolves it back and fits the decay of both error channels.
pub fn evolve(
    prob: &Problem,
    u: &GridField,
    perturb: Perturbation,
    horizon: f64,
) -> Result<(ConvergenceTrace, EvolveReport)> {
    if u.dim() != prob.dim() {
        return Err(Error::config("field", "field dimension does not match the problem"));
    }
    let delta = perturb.amplitude();
    let v0_from = |base: &GridField| {
        base.with_values(
            (0..base.len())
                .map(|i| base.values()[i] + delta * perturb.shape(prob, &base.position(i)))
                .collect(),
        )
    };
    let scheme = LfScheme::from_fields(prob, &[u, &v0_from(u)]);
    let (u_ref, reference_shift) = polish_reference(prob, &scheme, u)?;
    let v0 = v0_from(&u_ref);
    let dt_max = scheme.stable_dt(prob, &v0);
    let steps = (horizon / dt_max).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let trace = evolve_cauchy(prob, &scheme, &v0, &u_ref, horizon, (steps / TRACE_SAMPLES).max(1))?;

    let relax = 1.0 / prob.alpha;
    let end = horizon.min(5.0 / prob.alpha);
    let value = rate_fit(&trace, Channel::Value, (0.0, end));
    let grad = rate_fit(&trace, Channel::Grad, (relax, end));

    let tail: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.grad_error)
        .filter(|(t, e)| **t >= relax && **e > NOISE_FLOOR)
        .map(|(_, e)| *e)
        .collect();
    let grad_decreasing_after_relaxation = tail.len() >= 2 && tail.windows(2).all(|w| w[1] < w[0]);

    let basin = probe_basin(
        prob,
        &u_ref,
        |q| perturb.shape(prob, q),
        &BASIN_AMPLITUDES,
        horizon,
    );
    let report = EvolveReport {
        perturbation: perturb,
        alpha: prob.alpha,
        horizon,
        dt,
        sigma: scheme.sigma[..prob.dim()].to_vec(),
        reference_shift,
        value,
        grad,
        grad_decreasing_after_relaxation,
        basin,
    };
    Ok((trace, report))
}

fn rate_fit(trace: &ConvergenceTrace, channel: Channel, window: (f64, f64)) -> RateFit {
    let initial = match channel {
        Channel::Value => trace.value_error.first(),
        Channel::Grad => trace.grad_error.first(),
    };
    if initial.is_none_or(|e| *e <= EXCITATION_FLOOR) {
        return RateFit {
            channel,
            window: [window.0, window.1],
            rate: None,
            note: Some("channel not excited by the perturbation".into()),
        };
    }
    match fit_decay_rate(trace, channel, window) {
        Ok(rate) => RateFit {
            channel,
            window: [window.0, window.1],
            rate: Some(rate),
            note: None,
        },
        Err(e) => RateFit {
            channel,
            window: [window.0, window.1],
            rate: None,
            note: Some(e.to_string()),
        },
    }
}
