//! Semi-Lagrangian value iteration for `H(du) + αu = 0`.
//!
//! One step of the dynamic-programming operator is
//! `(Tu)(x) = min_{|v_i| ≤ v_max} [ dt·L(x, v) + (1 − α·dt)·u(x − dt·v) ]`,
//! a sup-norm contraction with factor `1 − α·dt` whose fixed point solves the
//! equation up to `O(dt)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{numerical_gradient, GradientMethod, GridField, Interp};
use crate::problem::{Problem, Vector, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_sup_change: f64,
    pub residual_inf: f64,
    pub dt_dpp: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SlOptions {
    pub interp: Interp,
    /// Time step of the operator; `None` selects [`default_dt`].
    pub dt_dpp: Option<f64>,
    pub tol: f64,
    pub max_iterations: Option<usize>,
    /// Scan points per axis of the inner minimization.
    pub scan_points: usize,
    pub newton_steps: usize,
}

impl Default for SlOptions {
    fn default() -> Self {
        Self {
            interp: Interp::Cubic,
            dt_dpp: None,
            tol: 1e-8,
            max_iterations: None,
            scan_points: 17,
            newton_steps: 3,
        }
    }
}

/// `0.5·min h / v_max`, reduced so that `α·dt ≤ 0.5`.
pub fn default_dt(prob: &Problem, spacing: f64) -> f64 {
    let v_max = prob.search_velocity(1.0);
    (0.5 * spacing / v_max).min(0.5 / prob.alpha)
}

/// Precomputed data shared by every node of one operator application.
struct Operator<'a> {
    prob: &'a Problem,
    dt: f64,
    beta: f64,
    v_max: f64,
    scan_points: usize,
    newton_steps: usize,
}

impl Operator<'_> {
    fn new<'a>(prob: &'a Problem, dt: f64, opts: &SlOptions) -> Result<Operator<'a>> {
        if !(dt > 0.0 && prob.alpha * dt < 1.0) {
            return Err(Error::config(
                "dt_dpp",
                format!("need 0 < alpha*dt < 1, got alpha*dt = {}", prob.alpha * dt),
            ));
        }
        Ok(Operator {
            prob,
            dt,
            beta: 1.0 - prob.alpha * dt,
            v_max: prob.search_velocity(1.0),
            scan_points: opts.scan_points.max(2),
            newton_steps: opts.newton_steps,
        })
    }

    #[inline]
    fn objective(&self, u: &GridField, x: &Vector, v: &Vector) -> f64 {
        let foot = foot_point(x, v, self.dt);
        self.dt * self.prob.kinetic_lagrangian(v) + self.beta * u.interpolate(&foot)
    }

    /// Minimizes over velocities at node position `x`; returns the minimum.
    fn minimize(&self, u: &GridField, x: &Vector) -> f64 {
        let dim = self.prob.dim();
        let n = self.scan_points;
        let step = 2.0 * self.v_max / (n - 1) as f64;
        let axis_value = |k: usize| if 2 * k + 1 == n { 0.0 } else { -self.v_max + k as f64 * step };

        let mut best = f64::INFINITY;
        let mut best_v = [0.0; MAX_DIM];
        let mut best_speed = f64::INFINITY;
        let n1 = if dim == 2 { n } else { 1 };
        for a in 0..n {
            for b in 0..n1 {
                let v = [axis_value(a), if dim == 2 { axis_value(b) } else { 0.0 }];
                let f = self.objective(u, x, &v);
                let speed = v[0] * v[0] + v[1] * v[1];
                if f < best || (f == best && speed < best_speed) {
                    best = f;
                    best_v = v;
                    best_speed = speed;
                }
            }
        }

        let a_inv = self.prob.metric.inverse();
        let drift = self.prob.drift.a;
        for _ in 0..self.newton_steps {
            let foot = foot_point(x, &best_v, self.dt);
            let jet = u.interpolate_jet(&foot);
            let w = self.prob.metric.apply_inv(&best_v);
            let mut g = [0.0; MAX_DIM];
            let mut h = [[0.0; MAX_DIM]; MAX_DIM];
            for i in 0..dim {
                g[i] = self.dt * (w[i] - drift[i]) - self.beta * self.dt * jet.grad[i];
                for j in 0..dim {
                    h[i][j] = self.dt * a_inv[i][j] + self.beta * self.dt * self.dt * jet.hess[i][j];
                }
            }
            let delta = match solve_spd(dim, &h, &g) {
                Some(d) => d,
                // indefinite curvature from the interpolant: use the kinetic part only
                None => {
                    let mut hk = [[0.0; MAX_DIM]; MAX_DIM];
                    for i in 0..dim {
                        for j in 0..dim {
                            hk[i][j] = self.dt * a_inv[i][j];
                        }
                    }
                    solve_spd(dim, &hk, &g).unwrap_or([0.0; MAX_DIM])
                }
            };
            let mut cand = best_v;
            for i in 0..dim {
                cand[i] = (best_v[i] - delta[i]).clamp(-self.v_max, self.v_max);
            }
            let f = self.objective(u, x, &cand);
            if f < best {
                best = f;
                best_v = cand;
            } else {
                break;
            }
        }
        best - self.dt * self.prob.potential.eval(x)
    }
}

#[inline]
fn foot_point(x: &Vector, v: &Vector, dt: f64) -> Vector {
    [x[0] - dt * v[0], x[1] - dt * v[1]]
}

/// Solves `H d = g` for symmetric positive definite `H`; `None` otherwise.
fn solve_spd(dim: usize, h: &[[f64; MAX_DIM]; MAX_DIM], g: &Vector) -> Option<Vector> {
    if dim == 1 {
        return (h[0][0] > 0.0).then(|| [g[0] / h[0][0], 0.0]);
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(h[0][0] > 0.0 && det > 0.0) {
        return None;
    }
    Some([
        (h[1][1] * g[0] - h[0][1] * g[1]) / det,
        (h[0][0] * g[1] - h[1][0] * g[0]) / det,
    ])
}

/// One application of the dynamic-programming operator.
pub fn dpp_apply(prob: &Problem, u: &GridField, dt_dpp: f64, opts: &SlOptions) -> Result<GridField> {
    let op = Operator::new(prob, dt_dpp, opts)?;
    let u = u.clone().with_interp(opts.interp);
    Ok(apply(&op, &u))
}

fn apply(op: &Operator<'_>, u: &GridField) -> GridField {
    let values: Vec<f64> = (0..u.len())
        .into_par_iter()
        .map(|idx| op.minimize(u, &u.position(idx)))
        .collect();
    u.with_values(values)
}

/// Iterates the operator from `−(V + ½⟨Aa,a⟩)/α` until the sup-norm change is at most `tol`.
pub fn solve_value_iteration(
    prob: &Problem,
    nodes_per_axis: &[usize],
    opts: &SlOptions,
) -> Result<(GridField, SolveStats)> {
    if !(opts.tol > 0.0) {
        return Err(Error::config("tol", "tolerance must be positive"));
    }
    if nodes_per_axis.len() != prob.dim() {
        return Err(Error::config("grid", format!("expected {} node counts", prob.dim())));
    }
    let drift_energy = 0.5 * prob.metric.quad(&prob.drift.a);
    let mut u = GridField::from_fn(&prob.domain, nodes_per_axis, |q| {
        -(prob.potential.eval(q) + drift_energy) / prob.alpha
    })?
    .with_interp(opts.interp);
    let dt = opts.dt_dpp.unwrap_or_else(|| default_dt(prob, u.min_spacing()));
    let op = Operator::new(prob, dt, opts)?;
    let cap = opts
        .max_iterations
        .unwrap_or_else(|| 10 * ((1.0 / opts.tol).ln() / (prob.alpha * dt)).ceil().max(1.0) as usize);

    let mut change = f64::INFINITY;
    for it in 1..=cap {
        let next = apply(&op, &u);
        change = next.sup_distance(&u);
        u = next;
        if !change.is_finite() {
            return Err(Error::numerical("value iteration", format!("non-finite update at iteration {it}")));
        }
        if change <= opts.tol {
            let residual_inf = hj_residual(prob, &u, GradientMethod::Centered);
            return Ok((
                u,
                SolveStats {
                    iterations: it,
                    final_sup_change: change,
                    residual_inf,
                    dt_dpp: dt,
                },
            ));
        }
    }
    Err(Error::numerical(
        "value iteration",
        format!("no convergence after {cap} iterations (last change {change:e})"),
    ))
}

/// `max_x |H(du(x), x) + α u(x)|` with a numerical gradient.
pub fn hj_residual(prob: &Problem, u: &GridField, method: GradientMethod) -> f64 {
    let grad = numerical_gradient(u, method);
    (0..u.len())
        .map(|idx| {
            let q = u.position(idx);
            let p: Vector = std::array::from_fn(|a| grad.get(a).map_or(0.0, |g| g.values()[idx]));
            (prob.hamiltonian(&p, &q) + prob.alpha * u.values()[idx]).abs()
        })
        .fold(0.0, f64::max)
}
