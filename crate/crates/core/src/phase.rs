//! The damped characteristic system `q̇ = A(p + a)`, `ṗ = −∇V(q) − αp`, its
//! RK4 integration, and measurements of the graph `{(du(q), q)}` along the flow.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::fit_log_linear;
use crate::grid::{fmt_f64, numerical_gradient, GradientMethod, GridField, Interp};
use crate::problem::{PhaseState, Problem, Vector, MAX_DIM};

/// `(q̇, ṗ)` at `z`.
pub fn dissipative_field(prob: &Problem, z: &PhaseState) -> (Vector, Vector) {
    let q_dot = prob.hamiltonian_dp(&z.p);
    let grad = prob.potential.grad(&z.q);
    let p_dot = std::array::from_fn(|i| -grad[i] - prob.alpha * z.p[i]);
    (q_dot, p_dot)
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// States with wrapped positions.
    pub states: Vec<PhaseState>,
    /// Positions in the universal cover.
    pub lifted: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Classical RK4 with `⌈T/dt⌉` equal steps. Positions are integrated in the
/// universal cover and wrapped on output.
pub fn rk4_integrate(prob: &Problem, z0: &PhaseState, dt: f64, horizon: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && horizon >= dt) {
        return Err(Error::config("dt", format!("need 0 < dt <= T, got dt={dt}, T={horizon}")));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let dim = prob.dim();
    let mut traj = Trajectory::default();
    let mut z = *z0;
    let record = |traj: &mut Trajectory, t: f64, z: &PhaseState| {
        traj.times.push(t);
        traj.lifted.push(z.q);
        traj.states.push(PhaseState {
            q: prob.domain.wrap_unchecked(&z.q),
            p: z.p,
        });
    };
    record(&mut traj, 0.0, &z);
    let shift = |z: &PhaseState, k: &(Vector, Vector), s: f64| PhaseState {
        q: std::array::from_fn(|i| z.q[i] + s * k.0[i]),
        p: std::array::from_fn(|i| z.p[i] + s * k.1[i]),
    };
    for n in 1..=steps {
        let k1 = dissipative_field(prob, &z);
        let k2 = dissipative_field(prob, &shift(&z, &k1, 0.5 * h));
        let k3 = dissipative_field(prob, &shift(&z, &k2, 0.5 * h));
        let k4 = dissipative_field(prob, &shift(&z, &k3, h));
        for i in 0..dim {
            z.q[i] += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            z.p[i] += h / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        let t = n as f64 * h;
        if z.q.iter().chain(z.p.iter()).any(|x| !x.is_finite()) {
            return Err(Error::numerical_at("rk4", "state blew up", t));
        }
        record(&mut traj, t, &z);
    }
    Ok(traj)
}

/// Cubic interpolant of the numerical gradient of a solved field.
pub struct GraphSampler<'a> {
    prob: &'a Problem,
    grad: Vec<GridField>,
}

impl<'a> GraphSampler<'a> {
    pub fn new(prob: &'a Problem, u: &GridField) -> Self {
        let grad = numerical_gradient(u, GradientMethod::Centered)
            .into_iter()
            .map(|g| g.with_interp(Interp::Cubic))
            .collect();
        Self { prob, grad }
    }

    /// `du(q)` interpolated from the gradient field.
    pub fn momentum(&self, q: &Vector) -> Vector {
        let mut p = [0.0; MAX_DIM];
        for (i, g) in self.grad.iter().enumerate() {
            p[i] = g.interpolate(q);
        }
        p
    }

    /// `|p − du(q)|_A`
    pub fn deviation(&self, z: &PhaseState) -> f64 {
        let du = self.momentum(&z.q);
        let w: Vector = std::array::from_fn(|i| z.p[i] - du[i]);
        self.prob.metric.quad(&w).max(0.0).sqrt()
    }

    pub fn on_graph(&self, q: &Vector) -> PhaseState {
        PhaseState { q: *q, p: self.momentum(q) }
    }
}

/// Deviation from the graph at every sample of a trajectory.
pub fn deviation_series(sampler: &GraphSampler<'_>, traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|z| sampler.deviation(z)).collect()
}

/// Launches on the graph at `q0` and returns the largest deviation from it along the flow.
pub fn graph_invariance_error(prob: &Problem, u: &GridField, q0: &Vector, dt: f64, horizon: f64) -> Result<f64> {
    let sampler = GraphSampler::new(prob, u);
    let traj = rk4_integrate(prob, &sampler.on_graph(q0), dt, horizon)?;
    Ok(deviation_series(&sampler, &traj).into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttractionFit {
    pub rate: f64,
    pub initial_deviation: f64,
    /// Largest deviation seen along an on-graph launch from the same position.
    pub noise_floor: f64,
    pub samples: usize,
}

/// Fits `deviation(t) ≈ C e^{−rate·t}` over `window` for a launch off the graph.
/// Samples within 10× the noise floor are excluded.
pub fn attraction_fit(
    prob: &Problem,
    u: &GridField,
    z0: &PhaseState,
    dt: f64,
    horizon: f64,
    window: (f64, f64),
) -> Result<AttractionFit> {
    let sampler = GraphSampler::new(prob, u);
    let reference = rk4_integrate(prob, &sampler.on_graph(&z0.q), dt, horizon)?;
    let noise_floor = deviation_series(&sampler, &reference).into_iter().fold(0.0, f64::max) + 1e-13;
    let traj = rk4_integrate(prob, z0, dt, horizon)?;
    let dev = deviation_series(&sampler, &traj);
    let initial_deviation = dev[0];
    if initial_deviation < 100.0 * noise_floor {
        return Err(Error::DegenerateFit(format!(
            "initial deviation {initial_deviation:e} is below 100x the noise floor {noise_floor:e}"
        )));
    }
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&dev)
        .filter(|(t, d)| **t >= window.0 && **t <= window.1 && **d > 10.0 * noise_floor)
        .map(|(t, d)| (*t, *d))
        .collect();
    let samples = pts.len();
    let rate = fit_log_linear(pts)?;
    Ok(AttractionFit {
        rate,
        initial_deviation,
        noise_floor,
        samples,
    })
}

/// `t,q_1[,q_2],p_1[,p_2],deviation`
pub fn trajectory_to_csv(prob: &Problem, traj: &Trajectory, deviation: &[f64]) -> String {
    let dim = prob.dim();
    let mut out = String::from("t");
    for i in 1..=dim {
        let _ = write!(out, ",q_{i}");
    }
    for i in 1..=dim {
        let _ = write!(out, ",p_{i}");
    }
    out.push_str(",deviation\n");
    for (k, z) in traj.states.iter().enumerate() {
        out.push_str(&fmt_f64(traj.times[k]));
        for x in z.q[..dim].iter().chain(z.p[..dim].iter()) {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push(',');
        out.push_str(&fmt_f64(deviation[k]));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::*;

    fn free(alpha: f64, metric: f64) -> Problem {
        let d = TorusDomain::new(&[1.0]).unwrap();
        let v = FourierPotential::constant(&d, 0.0);
        Problem::new(d, v, Metric::new(&[vec![metric]]).unwrap(), DriftForm { a: [0.0; 2] }, alpha).unwrap()
    }

    #[test]
    fn field_examples() {
        let p = free(1.0, 2.0);
        let (qd, pd) = dissipative_field(&p, &PhaseState { q: [0.3, 0.0], p: [1.0, 0.0] });
        assert_eq!((qd[0], pd[0]), (2.0, -1.0));
        let (qd, pd) = dissipative_field(&p, &PhaseState { q: [0.3, 0.0], p: [0.0, 0.0] });
        assert_eq!((qd[0], pd[0]), (0.0, 0.0));
    }

    #[test]
    fn rk4_matches_linear_closed_form() {
        let p = free(1.0, 1.0);
        let z0 = PhaseState { q: [0.1, 0.0], p: [1.0, 0.0] };
        let traj = rk4_integrate(&p, &z0, 1e-3, 5.0).unwrap();
        assert_eq!(traj.len(), 5001);
        for (k, t) in traj.times.iter().enumerate() {
            let pe = (-t).exp();
            let qe = 0.1 + (1.0 - (-t).exp());
            assert!((traj.states[k].p[0] - pe).abs() < 1e-10);
            assert!((traj.lifted[k][0] - qe).abs() < 1e-10);
            assert!((0.0..1.0).contains(&traj.states[k].q[0]));
        }
    }

    #[test]
    fn rest_point_is_constant() {
        let p = free(3.0, 1.0);
        let z0 = PhaseState { q: [0.4, 0.0], p: [0.0, 0.0] };
        let traj = rk4_integrate(&p, &z0, 0.01, 1.0).unwrap();
        assert!(traj.states.iter().all(|z| *z == z0));
    }

    #[test]
    fn rejects_bad_step() {
        let p = free(1.0, 1.0);
        assert!(rk4_integrate(&p, &PhaseState::default(), 0.0, 1.0).is_err());
        assert!(rk4_integrate(&p, &PhaseState::default(), 2.0, 1.0).is_err());
    }

    #[test]
    fn constant_solution_graph_is_exactly_invariant() {
        let d = TorusDomain::new(&[1.0]).unwrap();
        let v = FourierPotential::constant(&d, 0.3);
        let p = Problem::new(d, v, Metric::identity(1), DriftForm { a: [0.0; 2] }, 2.0).unwrap();
        let u = GridField::from_fn(&p.domain, &[32], |_| -0.15).unwrap();
        let dev = graph_invariance_error(&p, &u, &[0.37, 0.0], 1e-2, 2.0).unwrap();
        assert!(dev <= 1e-12);
    }

    #[test]
    fn free_attraction_rate_and_degenerate_case() {
        let p = free(1.0, 1.0);
        let u = GridField::from_fn(&p.domain, &[32], |_| 0.0).unwrap();
        let z0 = PhaseState { q: [0.2, 0.0], p: [0.5, 0.0] };
        let fit = attraction_fit(&p, &u, &z0, 1e-3, 4.0, (0.5, 3.5)).unwrap();
        assert!((fit.rate - 1.0).abs() < 0.01);
        let on = PhaseState { q: [0.2, 0.0], p: [0.0, 0.0] };
        assert!(matches!(attraction_fit(&p, &u, &on, 1e-3, 4.0, (0.5, 3.5)), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn trajectory_csv_header_2d() {
        let d = TorusDomain::new(&[1.0, 1.0]).unwrap();
        let v = FourierPotential::constant(&d, 0.0);
        let p = Problem::new(d, v, Metric::identity(2), DriftForm { a: [0.0; 2] }, 1.0).unwrap();
        let traj = rk4_integrate(&p, &PhaseState::default(), 0.5, 1.0).unwrap();
        let csv = trajectory_to_csv(&p, &traj, &[0.0; 3]);
        assert!(csv.starts_with("t,q_1,q_2,p_1,p_2,deviation\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
