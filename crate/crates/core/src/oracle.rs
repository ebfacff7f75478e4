//! Direct minimization of the truncated discounted action over piecewise-linear
//! curves, an independent route to the value function at sample points.
//!
//! For a curve `γ` with `γ(0) = q` the action is
//! `∫₀ᵀ e^{−αt} (½⟨A⁻¹γ̇, γ̇⟩ − V(γ) + ⟨a, γ̇⟩) dt`. The value function of
//! `H(du) + αu = 0` is the infimum of this action; the literal convention
//! reports its negative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{dot, norm, Problem, Vector, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Convention {
    /// `u = +inf 𝔍`, written with the backward velocity `v = −γ̇` and the
    /// Lagrangian `L(q, v) = ½vᵀA⁻¹v − ⟨a, v⟩ − V(q)`. Solves `H(du) + αu = 0`.
    Canonical,
    /// `u = −inf 𝔍` with the integrand written in the forward velocity.
    PaperLiteral,
}

/// Piecewise-linear curve with nodes in the universal cover; `nodes[0]` lifts `q0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub q0: Vector,
    pub dt: f64,
    pub nodes: Vec<Vector>,
}

impl Curve {
    pub fn stationary(q0: Vector, dt: f64, segments: usize) -> Self {
        Self {
            q0,
            dt,
            nodes: vec![q0; segments + 1],
        }
    }

    pub fn constant_velocity(q0: Vector, v: Vector, dt: f64, segments: usize) -> Self {
        let nodes = (0..=segments)
            .map(|j| {
                let t = j as f64 * dt;
                [q0[0] + t * v[0], q0[1] + t * v[1]]
            })
            .collect();
        Self { q0, dt, nodes }
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.segments() as f64
    }

    fn velocity(&self, j: usize) -> Vector {
        let (a, b) = (self.nodes[j], self.nodes[j + 1]);
        [(b[0] - a[0]) / self.dt, (b[1] - a[1]) / self.dt]
    }

    fn midpoint(&self, j: usize) -> Vector {
        let (a, b) = (self.nodes[j], self.nodes[j + 1]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.segments()).map(|j| norm(MAX_DIM, &self.velocity(j))).fold(0.0, f64::max)
    }
}

/// `∫ e^{−αt} dt` over segment `j`.
pub fn segment_weight(alpha: f64, dt: f64, j: usize) -> f64 {
    (1.0 - (-alpha * dt).exp()) * (-alpha * j as f64 * dt).exp() / alpha
}

/// Weighted totals of the three integrand pieces, each written in the
/// convention's own velocity variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionTerms {
    pub kinetic: f64,
    pub drift: f64,
    pub potential: f64,
}

impl ActionTerms {
    pub fn total(&self) -> f64 {
        self.kinetic + self.drift + self.potential
    }
}

pub fn action_terms(prob: &Problem, curve: &Curve, convention: Convention) -> ActionTerms {
    let dim = prob.dim();
    let mut terms = ActionTerms {
        kinetic: 0.0,
        drift: 0.0,
        potential: 0.0,
    };
    for j in 0..curve.segments() {
        let w = segment_weight(prob.alpha, curve.dt, j);
        let fwd = curve.velocity(j);
        let m = curve.midpoint(j);
        let (vel, drift_sign) = match convention {
            Convention::Canonical => ([-fwd[0], -fwd[1]], -1.0),
            Convention::PaperLiteral => (fwd, 1.0),
        };
        terms.kinetic += w * 0.5 * prob.metric.quad_inv(&vel);
        terms.drift += w * drift_sign * dot(dim, &prob.drift.a, &vel);
        terms.potential -= w * prob.potential.eval(&m);
    }
    terms
}

/// Truncated discounted action with midpoint quadrature and exact segment weights.
pub fn action_value(prob: &Problem, curve: &Curve, convention: Convention) -> f64 {
    action_terms(prob, curve, convention).total()
}

/// Gradient of [`action_value`] with respect to nodes `1..=N` (node 0 is fixed).
/// Both conventions evaluate the same number, so they share the gradient.
pub fn action_gradient(prob: &Problem, curve: &Curve, _convention: Convention) -> Vec<Vector> {
    let dim = prob.dim();
    let n = curve.segments();
    let dt = curve.dt;
    let a = prob.drift.a;
    let mut grad = vec![[0.0; MAX_DIM]; n];
    for j in 0..n {
        let w = segment_weight(prob.alpha, dt, j);
        let v = curve.velocity(j);
        let av = prob.metric.apply_inv(&v);
        let gv = prob.potential.grad(&curve.midpoint(j));
        // d/d(end node) of w·(½ vᵀA⁻¹v + ⟨a,v⟩ − V(mid)), v = (end − start)/dt
        let end: Vector = std::array::from_fn(|i| if i < dim { w * ((av[i] + a[i]) / dt - 0.5 * gv[i]) } else { 0.0 });
        let start: Vector = std::array::from_fn(|i| if i < dim { w * (-(av[i] + a[i]) / dt - 0.5 * gv[i]) } else { 0.0 });
        for i in 0..dim {
            grad[j][i] += end[i];
            if j > 0 {
                grad[j - 1][i] += start[i];
            }
        }
    }
    grad
}

/// Upper bound on `|∫_T^∞ e^{−αt} L dt|` for curves with speed at most the search velocity.
pub fn tail_bound(prob: &Problem, horizon: f64) -> f64 {
    tail_bound_with(integrand_bound(prob), prob.alpha, horizon)
}

/// `e^{−αT}·M_L/α`
pub fn tail_bound_with(integrand_bound: f64, alpha: f64, horizon: f64) -> f64 {
    (-alpha * horizon).exp() * integrand_bound / alpha
}

/// `M_L`: bound on the integrand for speeds up to the search velocity.
pub fn integrand_bound(prob: &Problem) -> f64 {
    let v = prob.search_velocity(1.0);
    let inv_eig = {
        let ev = prob.metric.eigenvalues();
        1.0 / ev[..prob.dim()].iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (vmin, vmax) = prob.potential_extrema();
    0.5 * v * v * inv_eig + norm(prob.dim(), &prob.drift.a) * v + vmin.abs().max(vmax.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub horizon: f64,
    pub segments: usize,
    pub restarts: usize,
    pub convention: Convention,
    pub seed: u64,
    pub max_iterations: usize,
}

impl OracleConfig {
    pub fn new(horizon: f64, segments: usize, restarts: usize, convention: Convention, seed: u64) -> Self {
        Self {
            horizon,
            segments,
            restarts,
            convention,
            seed,
            max_iterations: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("oracle.T", "horizon must be positive"));
        }
        if self.segments < 8 {
            return Err(Error::config("oracle.N", "need at least 8 segments"));
        }
        if self.restarts < 1 {
            return Err(Error::config("oracle.restarts", "need at least one restart"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub u_estimate: f64,
    /// Minimized truncated action.
    pub action: f64,
    pub tail_bound: f64,
    pub curve: Curve,
    /// Final action of each restart; `None` for failed restarts.
    pub restart_values: Vec<Option<f64>>,
    /// Set when the best curve reaches the search velocity.
    pub velocity_bound_binding: bool,
}

/// Multistart Barzilai–Borwein descent on the discretized action from `q0`.
pub fn minimize_action(prob: &Problem, q0: &Vector, config: &OracleConfig) -> Result<OracleResult> {
    config.validate()?;
    let dt = config.horizon / config.segments as f64;
    let v_max = prob.search_velocity(1.0);
    let dim = prob.dim();
    let q0 = prob.domain.wrap_unchecked(q0);

    let runs: Vec<Option<(f64, Curve)>> = (0..config.restarts)
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 {
                Curve::stationary(q0, dt, config.segments)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(k as u64);
                let v: Vector = std::array::from_fn(|i| if i < dim { rng.random_range(-v_max..=v_max) } else { 0.0 });
                Curve::constant_velocity(q0, v, dt, config.segments)
            };
            descend(prob, start, config.max_iterations)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (k, r) in runs.iter().enumerate() {
        if let Some((v, _)) = r {
            if best.is_none_or(|(_, b)| *v < b) {
                best = Some((k, *v));
            }
        }
    }
    let (k, action) = best.ok_or_else(|| Error::numerical("action oracle", "every restart failed its line search"))?;
    let curve = runs[k].as_ref().map(|r| r.1.clone()).expect("best restart exists");
    let u_estimate = match config.convention {
        Convention::Canonical => action,
        Convention::PaperLiteral => -action,
    };
    Ok(OracleResult {
        u_estimate,
        action,
        tail_bound: tail_bound(prob, config.horizon),
        velocity_bound_binding: curve.max_speed() >= 0.99 * v_max,
        restart_values: runs.iter().map(|r| r.as_ref().map(|x| x.0)).collect(),
        curve,
    })
}

/// Kinetic Hessian of the free nodes: a tridiagonal matrix in the node index
/// (times `A⁻¹` across axes). Used as the descent preconditioner.
struct KineticPreconditioner {
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl KineticPreconditioner {
    fn new(alpha: f64, dt: f64, segments: usize) -> Self {
        let w: Vec<f64> = (0..segments).map(|j| segment_weight(alpha, dt, j) / (dt * dt)).collect();
        let diag = (1..=segments).map(|k| w[k - 1] + w.get(k).copied().unwrap_or(0.0)).collect();
        let lower = (1..segments).map(|k| -w[k]).collect();
        Self { lower, diag }
    }

    /// `(T ⊗ A⁻¹)⁻¹ g` by a Thomas solve per axis.
    fn solve(&self, prob: &Problem, g: &[Vector]) -> Vec<Vector> {
        let dim = prob.dim();
        let n = g.len();
        let rhs: Vec<Vector> = g.iter().map(|x| prob.metric.apply(x)).collect();
        let mut out = vec![[0.0; MAX_DIM]; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for axis in 0..dim {
            c[0] = self.lower.first().copied().unwrap_or(0.0) / self.diag[0];
            d[0] = rhs[0][axis] / self.diag[0];
            for k in 1..n {
                let sub = self.lower[k - 1];
                let m = self.diag[k] - sub * c[k - 1];
                c[k] = if k + 1 < n { self.lower[k] / m } else { 0.0 };
                d[k] = (rhs[k][axis] - sub * d[k - 1]) / m;
            }
            out[n - 1][axis] = d[n - 1];
            for k in (0..n - 1).rev() {
                out[k][axis] = d[k] - c[k] * out[k + 1][axis];
            }
        }
        out
    }
}

/// Preconditioned gradient descent with Barzilai–Borwein steps and Armijo
/// backtracking. Returns `None` if the first line search fails or the value
/// is non-finite.
fn descend(prob: &Problem, mut curve: Curve, max_iterations: usize) -> Option<(f64, Curve)> {
    let dim = prob.dim();
    let conv = Convention::PaperLiteral;
    let precond = KineticPreconditioner::new(prob.alpha, curve.dt, curve.segments());
    let mut f = action_value(prob, &curve, conv);
    if !f.is_finite() {
        return None;
    }
    let mut g = action_gradient(prob, &curve, conv);
    let mut step = 1.0;
    let mut accepted = 0usize;
    let mut stalls = 0usize;

    for _ in 0..max_iterations {
        let dir = precond.solve(prob, &g);
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| dot(dim, a, b)).sum();
        if slope <= 1e-30 {
            break;
        }
        let mut trial_step = step;
        let mut next = None;
        for _ in 0..60 {
            let mut cand = curve.clone();
            for (node, d) in cand.nodes[1..].iter_mut().zip(&dir) {
                for i in 0..dim {
                    node[i] -= trial_step * d[i];
                }
            }
            let fc = action_value(prob, &cand, conv);
            if fc.is_finite() && fc <= f - 1e-4 * trial_step * slope {
                next = Some((cand, fc));
                break;
            }
            trial_step *= 0.5;
        }
        let Some((cand, fc)) = next else {
            if accepted == 0 {
                return None;
            }
            break;
        };
        accepted += 1;
        let gc = action_gradient(prob, &cand, conv);
        // BB step in the preconditioned metric: s = −t·P⁻¹g, so sᵀPs = t²·slope
        let sy: f64 = (0..g.len())
            .map(|k| {
                (0..dim)
                    .map(|i| (cand.nodes[k + 1][i] - curve.nodes[k + 1][i]) * (gc[k][i] - g[k][i]))
                    .sum::<f64>()
            })
            .sum();
        let sps = trial_step * trial_step * slope;
        step = if sy > 0.0 { sps / sy } else { 2.0 * trial_step };
        if f - fc <= 1e-15 * f.abs().max(1e-3) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        curve = cand;
        f = fc;
        g = gc;
        if stalls >= 5 {
            break;
        }
    }
    Some((f, curve))
}
