//! Explicit Lax–Friedrichs time marching of `∂_t u + H(du) + αu = 0`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{fmt_f64, GridField};
use crate::problem::{Problem, Vector, MAX_DIM};

/// CFL number used when the step is chosen automatically.
pub const CFL: f64 = 0.9;

/// Per-axis artificial dissipation of the monotone numerical Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LfScheme {
    pub sigma: Vector,
}

impl LfScheme {
    /// Dissipation dominating `|∂H/∂p_i|` over the slope box
    /// `[min slope − 1, max slope + 1]` of the given fields.
    pub fn from_fields(prob: &Problem, fields: &[&GridField]) -> Self {
        let dim = prob.dim();
        let mut lo = [f64::INFINITY; MAX_DIM];
        let mut hi = [f64::NEG_INFINITY; MAX_DIM];
        for f in fields {
            for axis in 0..dim {
                let h = f.spacing(axis);
                for idx in 0..f.len() {
                    let [i, j] = f.multi_index(idx);
                    let (i, j) = (i as isize, j as isize);
                    let next = if axis == 0 { f.flat_index(i + 1, j) } else { f.flat_index(i, j + 1) };
                    let s = (f.values()[next] - f.values()[idx]) / h;
                    lo[axis] = lo[axis].min(s);
                    hi[axis] = hi[axis].max(s);
                }
            }
        }
        for axis in 0..dim {
            if !lo[axis].is_finite() {
                lo[axis] = 0.0;
                hi[axis] = 0.0;
            }
            lo[axis] -= 1.0;
            hi[axis] += 1.0;
        }
        Self::from_slope_box(prob, &lo, &hi)
    }

    /// `σ_i = max over the box corners of |(A(p + a))_i|`; exact because the map is linear.
    pub fn from_slope_box(prob: &Problem, lo: &Vector, hi: &Vector) -> Self {
        let dim = prob.dim();
        let mut sigma = [0.0; MAX_DIM];
        let corners = 1usize << dim;
        for c in 0..corners {
            let p: Vector = std::array::from_fn(|i| if i < dim && (c >> i) & 1 == 1 { hi[i] } else if i < dim { lo[i] } else { 0.0 });
            let v = prob.hamiltonian_dp(&p);
            for i in 0..dim {
                sigma[i] = f64::max(sigma[i], v[i].abs());
            }
        }
        Self { sigma }
    }

    /// Largest step satisfying `dt·(Σ σ_i/h_i + α) ≤ CFL` on the grid of `u`.
    pub fn stable_dt(&self, prob: &Problem, u: &GridField) -> f64 {
        CFL / self.cfl_rate(prob, u)
    }

    fn cfl_rate(&self, prob: &Problem, u: &GridField) -> f64 {
        (0..prob.dim()).map(|i| self.sigma[i] / u.spacing(i)).sum::<f64>() + prob.alpha
    }
}

/// `Ĥ = H(x, (p⁻ + p⁺)/2) − ½ Σ σ_i (p⁺_i − p⁻_i)`
pub fn lf_hamiltonian(prob: &Problem, x: &Vector, p_minus: &Vector, p_plus: &Vector, sigma: &Vector) -> f64 {
    let dim = prob.dim();
    let mid: Vector = std::array::from_fn(|i| 0.5 * (p_minus[i] + p_plus[i]));
    let dissipation: f64 = (0..dim).map(|i| sigma[i] * (p_plus[i] - p_minus[i])).sum();
    prob.hamiltonian(&mid, x) - 0.5 * dissipation
}

/// One forward-Euler step `u' = u − dt·(Ĥ(x, D⁻u, D⁺u) + αu)`.
pub fn step_explicit(prob: &Problem, scheme: &LfScheme, u: &GridField, dt: f64) -> Result<GridField> {
    let rate = scheme.cfl_rate(prob, u);
    if !(dt > 0.0) || dt * rate > CFL * (1.0 + 1e-12) {
        return Err(Error::config(
            "dt",
            format!("CFL violated: dt*(sum sigma/h + alpha) = {} > {CFL}", dt * rate),
        ));
    }
    let next = step_unchecked(prob, scheme, u, dt);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("explicit step", "non-finite value after step"));
    }
    Ok(u.with_values(next))
}

fn step_unchecked(prob: &Problem, scheme: &LfScheme, u: &GridField, dt: f64) -> Vec<f64> {
    let dim = prob.dim();
    let h: Vector = std::array::from_fn(|i| if i < dim { u.spacing(i) } else { 1.0 });
    let vals = u.values();
    (0..u.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j] = u.multi_index(idx);
            let (i, j) = (i as isize, j as isize);
            let c = vals[idx];
            let mut pm = [0.0; MAX_DIM];
            let mut pp = [0.0; MAX_DIM];
            pm[0] = (c - vals[u.flat_index(i - 1, j)]) / h[0];
            pp[0] = (vals[u.flat_index(i + 1, j)] - c) / h[0];
            if dim == 2 {
                pm[1] = (c - vals[u.flat_index(i, j - 1)]) / h[1];
                pp[1] = (vals[u.flat_index(i, j + 1)] - c) / h[1];
            }
            let x = u.position(idx);
            c - dt * (lf_hamiltonian(prob, &x, &pm, &pp, &scheme.sigma) + prob.alpha * c)
        })
        .collect()
}

/// Sup-norm of the per-axis centered differences of `v − u`.
pub fn gradient_distance(v: &GridField, u: &GridField) -> f64 {
    let dim = v.dim();
    let mut worst = 0.0f64;
    for axis in 0..dim {
        let inv = 0.5 / v.spacing(axis);
        for idx in 0..v.len() {
            let [i, j] = v.multi_index(idx);
            let (i, j) = (i as isize, j as isize);
            let (f, b) = if axis == 0 {
                (v.flat_index(i + 1, j), v.flat_index(i - 1, j))
            } else {
                (v.flat_index(i, j + 1), v.flat_index(i, j - 1))
            };
            let d = ((v.values()[f] - u.values()[f]) - (v.values()[b] - u.values()[b])) * inv;
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Sup-norm of the per-axis centered second differences of `v − u` (informational).
pub fn second_difference_distance(v: &GridField, u: &GridField) -> f64 {
    let mut worst = 0.0f64;
    for axis in 0..v.dim() {
        let inv = 1.0 / (v.spacing(axis) * v.spacing(axis));
        for idx in 0..v.len() {
            let [i, j] = v.multi_index(idx);
            let (i, j) = (i as isize, j as isize);
            let (f, b) = if axis == 0 {
                (v.flat_index(i + 1, j), v.flat_index(i - 1, j))
            } else {
                (v.flat_index(i, j + 1), v.flat_index(i, j - 1))
            };
            let w = |k: usize| v.values()[k] - u.values()[k];
            worst = worst.max(((w(f) - 2.0 * w(idx) + w(b)) * inv).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub times: Vec<f64>,
    pub value_error: Vec<f64>,
    pub grad_error: Vec<f64>,
}

impl ConvergenceTrace {
    fn push(&mut self, t: f64, v: &GridField, u: &GridField) {
        self.times.push(t);
        self.value_error.push(v.sup_distance(u));
        self.grad_error.push(gradient_distance(v, u));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Discrete C¹ distance at each sample: the larger of the two channels.
    pub fn c1_error(&self) -> Vec<f64> {
        self.value_error.iter().zip(&self.grad_error).map(|(a, b)| a.max(*b)).collect()
    }

    /// `t,value_error,grad_error`, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value_error,grad_error\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.value_error[i]),
                fmt_f64(self.grad_error[i])
            );
        }
        out
    }
}

/// Marches `v0` to time `T` with the scheme's stable step, sampling the
/// distance to `u_ref` every `sample_every` steps (and at both ends).
pub fn evolve_cauchy(
    prob: &Problem,
    scheme: &LfScheme,
    v0: &GridField,
    u_ref: &GridField,
    horizon: f64,
    sample_every: usize,
) -> Result<ConvergenceTrace> {
    if !v0.same_grid(u_ref) {
        return Err(Error::config("field", "initial data and reference live on different grids"));
    }
    if !(horizon > 0.0) {
        return Err(Error::config("T", "horizon must be positive"));
    }
    let dt_max = scheme.stable_dt(prob, v0);
    let steps = (horizon / dt_max).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let every = sample_every.max(1);

    let mut trace = ConvergenceTrace::default();
    let mut v = v0.clone();
    trace.push(0.0, &v, u_ref);
    for n in 1..=steps {
        let t = n as f64 * dt;
        v = step_explicit(prob, scheme, &v, dt).map_err(|e| match e {
            Error::Numerical { context, message, .. } => Error::Numerical { context, message, time: Some(t) },
            other => other,
        })?;
        if n % every == 0 || n == steps {
            trace.push(t, &v, u_ref);
        }
    }
    Ok(trace)
}

/// Marches until the per-step sup-norm change is at most `tol`; returns the
/// field and the number of steps taken.
pub fn march_to_steady(
    prob: &Problem,
    scheme: &LfScheme,
    v0: &GridField,
    tol: f64,
    max_steps: usize,
) -> Result<(GridField, usize)> {
    let dt = scheme.stable_dt(prob, v0);
    let mut v = v0.clone();
    for n in 1..=max_steps {
        let next = step_explicit(prob, scheme, &v, dt).map_err(|e| match e {
            Error::Numerical { context, message, .. } => Error::Numerical { context, message, time: Some(n as f64 * dt) },
            other => other,
        })?;
        let change = next.sup_distance(&v);
        v = next;
        if change <= tol {
            return Ok((v, n));
        }
    }
    Err(Error::numerical("steady-state march", format!("no steady state within {max_steps} steps")))
}

/// Steady state of the explicit scheme from `v0 ≡ 0`, with the dissipation
/// taken from the slope box of the initial data widened until it contains
/// the slopes of the result.
pub fn solve_steady_state(prob: &Problem, nodes_per_axis: &[usize], tol: f64) -> Result<(GridField, LfScheme, usize)> {
    let mut v = GridField::from_fn(&prob.domain, nodes_per_axis, |_| 0.0)?;
    let mut scheme = LfScheme::from_fields(prob, &[&v]);
    let mut total = 0;
    for _ in 0..8 {
        let dt = scheme.stable_dt(prob, &v);
        let max_steps = (200.0 * (1.0 / tol).ln() / (prob.alpha * dt)).ceil() as usize;
        let (next, steps) = march_to_steady(prob, &scheme, &v, tol, max_steps)?;
        total += steps;
        v = next;
        let needed = LfScheme::from_fields(prob, &[&v]);
        let covered = (0..prob.dim()).all(|i| needed.sigma[i] <= scheme.sigma[i] + 1.0);
        if covered {
            return Ok((v, scheme, total));
        }
        scheme = needed;
    }
    Err(Error::numerical("steady-state march", "slope box did not stabilize"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Value,
    Grad,
}

/// Least-squares slope of `−log(error)` against time over `window`.
pub fn fit_decay_rate(trace: &ConvergenceTrace, channel: Channel, window: (f64, f64)) -> Result<f64> {
    let errors = match channel {
        Channel::Value => &trace.value_error,
        Channel::Grad => &trace.grad_error,
    };
    let samples = trace
        .times
        .iter()
        .zip(errors)
        .filter(|(t, e)| **t >= window.0 && **t <= window.1 && **e > 1e-13);
    fit_log_linear(samples.map(|(t, e)| (*t, *e)))
}

pub(crate) fn fit_log_linear<I: IntoIterator<Item = (f64, f64)>>(samples: I) -> Result<f64> {
    let pts: Vec<(f64, f64)> = samples.into_iter().map(|(t, e)| (t, e.ln())).collect();
    if pts.len() < 5 {
        return Err(Error::DegenerateFit(format!(
            "only {} samples above the noise floor in the fit window (need 5)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("fit window has no time spread".into()));
    }
    Ok(-sxy / sxx)
}

/// Replaces `u` by the nearby fixed point of the scheme, so that distances
/// measured during an evolution are not floored by the gap between `u` and
/// the scheme's own steady state. Returns the polished field and its sup
/// distance from `u`.
pub fn polish_reference(prob: &Problem, scheme: &LfScheme, u: &GridField) -> Result<(GridField, f64)> {
    let dt = scheme.stable_dt(prob, u);
    let max_steps = (200.0 * 30.0 / (prob.alpha * dt)).ceil() as usize;
    let (fixed, _) = march_to_steady(prob, scheme, u, 1e-13 * u.sup_norm().max(1.0), max_steps)?;
    let shift = fixed.sup_distance(u);
    Ok((fixed, shift))
}

/// Outcome of one perturbation in a basin probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinProbe {
    pub amplitude: f64,
    pub initial_error: f64,
    pub final_error: f64,
    pub converged: bool,
}

/// Evolves `u_ref + amplitude·shape` for each amplitude and reports whether
/// the C¹ distance to `u_ref` fell below 1% of its initial value by `T`.
pub fn probe_basin<F: Fn(&Vector) -> f64>(
    prob: &Problem,
    u_ref: &GridField,
    shape: F,
    amplitudes: &[f64],
    horizon: f64,
) -> Vec<BasinProbe> {
    amplitudes
        .iter()
        .map(|&amplitude| {
            let v0 = u_ref.with_values(
                (0..u_ref.len())
                    .map(|i| u_ref.values()[i] + amplitude * shape(&u_ref.position(i)))
                    .collect(),
            );
            let scheme = LfScheme::from_fields(prob, &[u_ref, &v0]);
            let c1 = |v: &GridField| v.sup_distance(u_ref).max(gradient_distance(v, u_ref));
            let initial_error = c1(&v0);
            let outcome = polish_reference(prob, &scheme, u_ref)
                .and_then(|(fixed, _)| evolve_cauchy(prob, &scheme, &v0, &fixed, horizon, usize::MAX));
            match outcome {
                Ok(trace) => {
                    let final_error = *trace.c1_error().last().unwrap_or(&f64::INFINITY);
                    BasinProbe {
                        amplitude,
                        initial_error,
                        final_error,
                        converged: final_error <= 0.01 * initial_error,
                    }
                }
                Err(_) => BasinProbe {
                    amplitude,
                    initial_error,
                    final_error: f64::INFINITY,
                    converged: false,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::*;

    fn free_problem(alpha: f64) -> Problem {
        let d = TorusDomain::new(&[1.0]).unwrap();
        let v = FourierPotential::constant(&d, 0.0);
        Problem::new(d, v, Metric::identity(1), DriftForm { a: [0.0; 2] }, alpha).unwrap()
    }

    #[test]
    fn lf_examples() {
        let p = free_problem(1.0);
        let x = [0.3, 0.0];
        assert_eq!(lf_hamiltonian(&p, &x, &[0.4, 0.0], &[0.4, 0.0], &[2.0, 0.0]), p.hamiltonian(&[0.4, 0.0], &x));
        assert!((lf_hamiltonian(&p, &x, &[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]) + 0.875).abs() < 1e-15);
        let a = lf_hamiltonian(&p, &x, &[0.0, 0.0], &[0.5, 0.0], &[2.0, 0.0]);
        let b = lf_hamiltonian(&p, &x, &[0.0, 0.0], &[0.6, 0.0], &[2.0, 0.0]);
        assert!(b < a);
    }

    #[test]
    fn pure_discount_mode() {
        let p = free_problem(2.0);
        let u = GridField::from_fn(&p.domain, &[16], |_| 0.7).unwrap();
        let scheme = LfScheme::from_fields(&p, &[&u]);
        let dt = scheme.stable_dt(&p, &u);
        let mut v = u.clone();
        for _ in 0..10 {
            v = step_explicit(&p, &scheme, &v, dt).unwrap();
        }
        let expect = 0.7 * (1.0 - 2.0 * dt).powi(10);
        assert!(v.values().iter().all(|x| (x - expect).abs() < 1e-15));
    }

    #[test]
    fn cfl_violation_is_config_error() {
        let p = free_problem(1.0);
        let u = GridField::from_fn(&p.domain, &[16], |_| 0.0).unwrap();
        let scheme = LfScheme::from_fields(&p, &[&u]);
        let dt = 2.0 * scheme.stable_dt(&p, &u);
        assert!(matches!(step_explicit(&p, &scheme, &u, dt), Err(Error::Config { .. })));
    }

    #[test]
    fn exact_constant_solution_is_stationary() {
        let d = TorusDomain::new(&[1.0]).unwrap();
        let v = FourierPotential::constant(&d, 0.4);
        let p = Problem::new(d, v, Metric::identity(1), DriftForm { a: [0.0; 2] }, 2.0).unwrap();
        let u = GridField::from_fn(&p.domain, &[32], |_| -0.2).unwrap();
        let scheme = LfScheme::from_fields(&p, &[&u]);
        let next = step_explicit(&p, &scheme, &u, scheme.stable_dt(&p, &u)).unwrap();
        assert!(next.sup_distance(&u) <= 1e-12);
    }

    #[test]
    fn fit_examples() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let trace = ConvergenceTrace {
            value_error: times.iter().map(|t| (-2.0 * t).exp()).collect(),
            grad_error: times.iter().map(|_| 0.3).collect(),
            times: times.clone(),
        };
        let r = fit_decay_rate(&trace, Channel::Value, (0.0, 10.0)).unwrap();
        assert!((r - 2.0).abs() < 1e-9);
        assert_eq!(fit_decay_rate(&trace, Channel::Grad, (0.0, 10.0)).unwrap(), 0.0);
        let tiny = ConvergenceTrace {
            value_error: vec![1e-15; times.len()],
            grad_error: vec![1e-15; times.len()],
            times,
        };
        assert!(matches!(fit_decay_rate(&tiny, Channel::Value, (0.0, 10.0)), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn fit_with_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.03).collect();
        let trace = ConvergenceTrace {
            value_error: times
                .iter()
                .map(|t| (-2.0 * t).exp() * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
                .collect(),
            grad_error: vec![1.0; times.len()],
            times,
        };
        let r = fit_decay_rate(&trace, Channel::Value, (0.0, 3.0)).unwrap();
        assert!((r - 2.0).abs() < 0.05);
    }

    #[test]
    fn trace_csv_header() {
        let t = ConvergenceTrace {
            times: vec![0.0],
            value_error: vec![1.0],
            grad_error: vec![0.5],
        };
        assert!(t.to_csv().starts_with("t,value_error,grad_error\n0.0000000000000000e0,"));
    }
}
