//! Problem data on a flat torus and the pointwise formulas built from it.
//!
//! The Hamiltonian is `H(p, q) = ½ (p + a)ᵀ A (p + a) + V(q)` with a constant
//! symmetric positive definite metric `A`, a constant drift covector `a` and a
//! trigonometric potential `V`. Its Legendre dual is
//! `L(q, v) = ½ vᵀ A⁻¹ v − ⟨a, v⟩ − V(q)`.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan;

pub const MAX_DIM: usize = 2;

/// Coordinates, velocities and covectors. Entries past `dim` are zero.
pub type Vector = [f64; MAX_DIM];
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];

/// Scan resolution used for the potential extrema.
const EXTREMA_SCAN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TorusDomain {
    dim: usize,
    periods: Vector,
}

impl TorusDomain {
    pub fn new(periods: &[f64]) -> Result<Self> {
        let dim = periods.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::config("dim", format!("dimension must be 1 or 2, got {dim}")));
        }
        let mut p = [0.0; MAX_DIM];
        for (i, &l) in periods.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::config(format!("periods[{i}]"), format!("period must be positive, got {l}")));
            }
            p[i] = l;
        }
        Ok(Self { dim, periods: p })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.periods[axis]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods[..self.dim]
    }

    pub fn min_period(&self) -> f64 {
        self.periods().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Wraps without checking finiteness.
    pub fn wrap_unchecked(&self, q: &Vector) -> Vector {
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.dim {
            let l = self.periods[i];
            let mut x = q[i] - l * (q[i] / l).floor();
            // floor can leave x == l for tiny negative inputs
            if x >= l {
                x -= l;
            }
            out[i] = x;
        }
        out
    }
}

/// Maps a raw position into the canonical cell `[0, L_i)` per axis.
pub fn wrap_point(domain: &TorusDomain, q: &[f64]) -> Result<Vector> {
    if q.len() != domain.dim() {
        return Err(Error::Domain(format!(
            "point has {} coordinates, domain has dimension {}",
            q.len(),
            domain.dim()
        )));
    }
    if let Some(x) = q.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite coordinate {x}")));
    }
    let mut v = [0.0; MAX_DIM];
    v[..q.len()].copy_from_slice(q);
    Ok(domain.wrap_unchecked(&v))
}

/// One Fourier mode `c e^{2πi k·q/L}`; its conjugate partner at `-k` is implied.
/// The zero mode contributes its real part once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub k: [i32; MAX_DIM],
    pub coeff: Complex64,
}

/// Value, gradient and Hessian of the potential at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialJet {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierPotential {
    dim: usize,
    periods: Vector,
    modes: Vec<FourierMode>,
}

impl FourierPotential {
    pub fn new(domain: &TorusDomain, modes: Vec<FourierMode>) -> Result<Self> {
        let dim = domain.dim();
        for (i, m) in modes.iter().enumerate() {
            if m.k[dim..].iter().any(|&k| k != 0) {
                return Err(Error::config(
                    format!("potential.modes[{i}].k"),
                    "wavevector has more components than the domain dimension",
                ));
            }
            if !(m.coeff.re.is_finite() && m.coeff.im.is_finite()) {
                return Err(Error::config(format!("potential.modes[{i}]"), "non-finite coefficient"));
            }
            if m.k.iter().all(|&k| k == 0) && m.coeff.im != 0.0 {
                return Err(Error::config(
                    format!("potential.modes[{i}].im"),
                    "the zero mode must be real",
                ));
            }
            for (j, other) in modes[..i].iter().enumerate() {
                let neg = [-m.k[0], -m.k[1]];
                if other.k == m.k {
                    return Err(Error::config(
                        format!("potential.modes[{i}].k"),
                        format!("duplicate wavevector, also listed at modes[{j}]"),
                    ));
                }
                if other.k == neg {
                    return Err(Error::config(
                        format!("potential.modes[{i}].k"),
                        format!("Hermitian partner of modes[{j}] is implied and must not be listed"),
                    ));
                }
            }
        }
        Ok(Self {
            dim,
            periods: domain.periods,
            modes,
        })
    }

    /// A potential that is identically `c`.
    pub fn constant(domain: &TorusDomain, c: f64) -> Self {
        Self {
            dim: domain.dim(),
            periods: domain.periods,
            modes: vec![FourierMode {
                k: [0, 0],
                coeff: Complex64::new(c, 0.0),
            }],
        }
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.coeff *= factor;
        }
        out
    }

    fn wavenumber(&self, m: &FourierMode) -> Vector {
        std::array::from_fn(|i| if i < self.dim { TAU * m.k[i] as f64 / self.periods[i] } else { 0.0 })
    }

    fn phase_terms(&self, m: &FourierMode, q: &Vector) -> (Vector, f64, f64, f64) {
        let w = self.wavenumber(m);
        let theta: f64 = (0..self.dim).map(|i| w[i] * q[i]).sum();
        let (s, c) = theta.sin_cos();
        // Re(coeff e^{iθ}) and its θ-derivative
        let re = m.coeff.re * c - m.coeff.im * s;
        let d_re = -m.coeff.re * s - m.coeff.im * c;
        let mult = if m.k.iter().all(|&k| k == 0) { 1.0 } else { 2.0 };
        (w, re, d_re, mult)
    }

    pub fn eval(&self, q: &Vector) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (_, re, _, mult) = self.phase_terms(m, q);
                mult * re
            })
            .sum()
    }

    pub fn grad(&self, q: &Vector) -> Vector {
        self.jet(q).grad
    }

    pub fn hess(&self, q: &Vector) -> Matrix {
        self.jet(q).hess
    }

    pub fn jet(&self, q: &Vector) -> PotentialJet {
        let mut out = PotentialJet {
            value: 0.0,
            grad: [0.0; MAX_DIM],
            hess: [[0.0; MAX_DIM]; MAX_DIM],
        };
        for m in &self.modes {
            let (w, re, d_re, mult) = self.phase_terms(m, q);
            out.value += mult * re;
            for i in 0..self.dim {
                out.grad[i] += mult * d_re * w[i];
                for j in 0..self.dim {
                    out.hess[i][j] -= mult * re * w[i] * w[j];
                }
            }
        }
        out
    }
}

/// Constant symmetric positive definite metric with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    dim: usize,
    a: Matrix,
    a_inv: Matrix,
}

impl Metric {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::config("metric", "metric must be a square 1x1 or 2x2 matrix"));
        }
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in 0..dim {
                if !rows[i][j].is_finite() {
                    return Err(Error::config("metric", "non-finite entry"));
                }
                a[i][j] = rows[i][j];
            }
        }
        let scale = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| a[i][j].abs()).fold(0.0, f64::max);
        for i in 0..dim {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::config("metric", "metric is not symmetric"));
                }
            }
        }
        // Cholesky: A = LLᵀ must succeed with positive pivots.
        let l00 = a[0][0];
        if !(l00 > 0.0) {
            return Err(Error::config("metric", "metric is not positive definite"));
        }
        let a_inv = if dim == 1 {
            let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
            inv[0][0] = 1.0 / a[0][0];
            inv
        } else {
            let l10 = a[1][0] / l00.sqrt();
            let pivot = a[1][1] - l10 * l10;
            if !(pivot > 1e-14 * scale) {
                return Err(Error::config("metric", "metric is not positive definite"));
            }
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
        };
        let metric = Self { dim, a, a_inv };
        for i in 0..dim {
            for j in 0..dim {
                let prod: f64 = (0..dim).map(|k| a[i][k] * metric.a_inv[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (prod - target).abs() > 1e-10 {
                    return Err(Error::config("metric", "metric is too ill-conditioned to invert"));
                }
            }
        }
        Ok(metric)
    }

    pub fn identity(dim: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(&rows).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn inverse(&self) -> &Matrix {
        &self.a_inv
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.a[i][..self.dim].to_vec()).collect()
    }

    pub fn apply(&self, w: &Vector) -> Vector {
        mat_vec(self.dim, &self.a, w)
    }

    pub fn apply_inv(&self, w: &Vector) -> Vector {
        mat_vec(self.dim, &self.a_inv, w)
    }

    /// `wᵀ A w`
    pub fn quad(&self, w: &Vector) -> f64 {
        dot(self.dim, w, &self.apply(w))
    }

    /// `vᵀ A⁻¹ v`
    pub fn quad_inv(&self, v: &Vector) -> f64 {
        dot(self.dim, v, &self.apply_inv(v))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vector {
        if self.dim == 1 {
            [self.a[0][0], 0.0]
        } else {
            let (lo, hi) = sym2_eigen(&self.a);
            [lo, hi]
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[..self.dim].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftForm {
    pub a: Vector,
}

/// Point of the cotangent bundle: position `q` and momentum `p`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub q: Vector,
    pub p: Vector,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: TorusDomain,
    pub potential: FourierPotential,
    pub metric: Metric,
    pub drift: DriftForm,
    pub alpha: f64,
    extrema: OnceLock<(f64, f64)>,
}

impl Problem {
    pub fn new(
        domain: TorusDomain,
        potential: FourierPotential,
        metric: Metric,
        drift: DriftForm,
        alpha: f64,
    ) -> Result<Self> {
        let dim = domain.dim();
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config("alpha", format!("discount rate must be positive, got {alpha}")));
        }
        if metric.dim() != dim {
            return Err(Error::config("metric", format!("metric is {0}x{0}, domain dimension is {dim}", metric.dim())));
        }
        if potential.dim != dim || potential.periods != domain.periods {
            return Err(Error::config("potential", "potential was built for a different domain"));
        }
        if drift.a.iter().any(|x| !x.is_finite()) || drift.a[dim..].iter().any(|&x| x != 0.0) {
            return Err(Error::config("drift", "drift must be finite with one entry per axis"));
        }
        Ok(Self {
            domain,
            potential,
            metric,
            drift,
            alpha,
            extrema: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Same problem with a different discount rate and potential amplitude.
    pub fn rescaled(&self, alpha_factor: f64, potential_factor: f64) -> Result<Self> {
        Problem::new(
            self.domain.clone(),
            self.potential.scaled(potential_factor),
            self.metric.clone(),
            self.drift,
            self.alpha * alpha_factor,
        )
    }

    /// `(min V, max V)` by scan and refinement.
    pub fn potential_extrema(&self) -> (f64, f64) {
        *self.extrema.get_or_init(|| {
            let (max, _) = scan::maximize(&self.domain, EXTREMA_SCAN, |q| self.potential.eval(q));
            let (neg_min, _) = scan::maximize(&self.domain, EXTREMA_SCAN, |q| -self.potential.eval(q));
            (-neg_min, max)
        })
    }

    pub fn hamiltonian(&self, p: &Vector, q: &Vector) -> f64 {
        let w = self.shifted(p);
        0.5 * self.metric.quad(&w) + self.potential.eval(q)
    }

    /// `∂H/∂p = A (p + a)`
    pub fn hamiltonian_dp(&self, p: &Vector) -> Vector {
        self.metric.apply(&self.shifted(p))
    }

    pub fn lagrangian(&self, q: &Vector, v: &Vector) -> f64 {
        0.5 * self.metric.quad_inv(v) - dot(self.dim(), &self.drift.a, v) - self.potential.eval(q)
    }

    /// Velocity-dependent part of the Lagrangian, `½ vᵀA⁻¹v − ⟨a, v⟩`.
    pub fn kinetic_lagrangian(&self, v: &Vector) -> f64 {
        0.5 * self.metric.quad_inv(v) - dot(self.dim(), &self.drift.a, v)
    }

    /// `p = A⁻¹ v − a`
    pub fn legendre_momentum(&self, _q: &Vector, v: &Vector) -> Vector {
        let w = self.metric.apply_inv(v);
        std::array::from_fn(|i| w[i] - self.drift.a[i])
    }

    /// `max_q H(0_q) − H(z − ω)`; nonnegative exactly on the bounded-trajectory set.
    pub fn b_h_margin(&self, z: &PhaseState) -> f64 {
        let (_, vmax) = self.potential_extrema();
        let top = 0.5 * self.metric.quad(&self.drift.a) + vmax;
        top - 0.5 * self.metric.quad(&z.p) - self.potential.eval(&z.q)
    }

    /// Bound on `|A (p + a)|` over the bounded-trajectory set, times `safety`.
    pub fn velocity_bound(&self, safety: f64) -> f64 {
        let (vmin, vmax) = self.potential_extrema();
        let energy = 0.5 * self.metric.quad(&self.drift.a) + (vmax - vmin);
        let p_max = (2.0 * energy * self.metric.max_eigenvalue()).sqrt();
        let drift_speed = norm(self.dim(), &self.metric.apply(&self.drift.a));
        safety * (p_max + drift_speed)
    }

    /// `velocity_bound` with the floor `0.1 · min L · α`, used as a search radius.
    pub fn search_velocity(&self, safety: f64) -> f64 {
        self.velocity_bound(safety).max(0.1 * self.domain.min_period() * self.alpha)
    }

    fn shifted(&self, p: &Vector) -> Vector {
        std::array::from_fn(|i| p[i] + self.drift.a[i])
    }
}

pub(crate) fn dot(dim: usize, x: &Vector, y: &Vector) -> f64 {
    (0..dim).map(|i| x[i] * y[i]).sum()
}

pub(crate) fn norm(dim: usize, x: &Vector) -> f64 {
    dot(dim, x, x).sqrt()
}

fn mat_vec(dim: usize, m: &Matrix, w: &Vector) -> Vector {
    let mut out = [0.0; MAX_DIM];
    for i in 0..dim {
        out[i] = (0..dim).map(|j| m[i][j] * w[j]).sum();
    }
    out
}

/// Ascending eigenvalues of a symmetric 2x2 matrix.
pub(crate) fn sym2_eigen(m: &Matrix) -> (f64, f64) {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let rad = half_diff.hypot(m[0][1]);
    (mean - rad, mean + rad)
}

// ---- JSON schema ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub k: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    #[serde(rename = "type")]
    pub kind: PotentialKind,
    pub modes: Vec<ModeConfig>,
}

/// Problem as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub dim: usize,
    pub periods: Vec<f64>,
    pub potential: PotentialConfig,
    pub metric: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
    pub alpha: f64,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(Error::config("dim", format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.periods.len() != self.dim {
            return Err(Error::config("periods", format!("expected {} entries", self.dim)));
        }
        let domain = TorusDomain::new(&self.periods)?;
        if self.metric.len() != self.dim {
            return Err(Error::config("metric", format!("expected a {0}x{0} matrix", self.dim)));
        }
        let metric = Metric::new(&self.metric)?;
        if self.drift.len() != self.dim {
            return Err(Error::config("drift", format!("expected {} entries", self.dim)));
        }
        let mut a = [0.0; MAX_DIM];
        a[..self.dim].copy_from_slice(&self.drift);
        let modes = &self.potential.modes;
        let mut built = Vec::with_capacity(modes.len());
        for (i, m) in modes.iter().enumerate() {
            if m.k.len() != self.dim {
                return Err(Error::config(
                    format!("potential.modes[{i}].k"),
                    format!("expected {} integer components", self.dim),
                ));
            }
            let mut k = [0; MAX_DIM];
            k[..self.dim].copy_from_slice(&m.k);
            built.push(FourierMode {
                k,
                coeff: Complex64::new(m.re, m.im),
            });
        }
        let potential = FourierPotential::new(&domain, built)?;
        Problem::new(domain, potential, metric, DriftForm { a }, self.alpha)
    }

    pub fn from_problem(p: &Problem) -> Self {
        let dim = p.dim();
        Self {
            dim,
            periods: p.domain.periods().to_vec(),
            potential: PotentialConfig {
                kind: PotentialKind::Fourier,
                modes: p
                    .potential
                    .modes()
                    .iter()
                    .map(|m| ModeConfig {
                        k: m.k[..dim].to_vec(),
                        re: m.coeff.re,
                        im: m.coeff.im,
                    })
                    .collect(),
            },
            metric: p.metric.rows(),
            drift: p.drift.a[..dim].to_vec(),
            alpha: p.alpha,
        }
    }
}

impl Serialize for Problem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProblemConfig::from_problem(self).serialize(s)
    }
}
