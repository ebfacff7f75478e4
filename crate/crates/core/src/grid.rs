//! Periodic nodal fields, interpolation, differentiation and the field CSV format.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::BufRead;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::problem::{Matrix, TorusDomain, Vector, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    Linear,
    #[default]
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMethod {
    #[default]
    Centered,
    Spectral,
}

/// Interpolated value with its first and second derivatives.
#[derive(Debug, Clone, Copy)]
pub struct InterpJet {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

/// Nodal values on a regular periodic grid, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    domain: TorusDomain,
    nodes: [usize; MAX_DIM],
    values: Vec<f64>,
    pub interp: Interp,
}

impl GridField {
    pub fn new(domain: TorusDomain, nodes_per_axis: &[usize], values: Vec<f64>) -> Result<Self> {
        let dim = domain.dim();
        if nodes_per_axis.len() != dim {
            return Err(Error::config("grid", format!("expected {dim} node counts")));
        }
        if nodes_per_axis.iter().any(|&n| n < 4) {
            return Err(Error::config("grid", "need at least 4 nodes per axis"));
        }
        let mut nodes = [1; MAX_DIM];
        nodes[..dim].copy_from_slice(nodes_per_axis);
        let len: usize = nodes.iter().product();
        if values.len() != len {
            return Err(Error::config("grid", format!("expected {len} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("grid field", "non-finite nodal value"));
        }
        Ok(Self {
            domain,
            nodes,
            values,
            interp: Interp::Cubic,
        })
    }

    pub fn from_fn<F: Fn(&Vector) -> f64>(domain: &TorusDomain, nodes_per_axis: &[usize], f: F) -> Result<Self> {
        let mut field = Self::new(domain.clone(), nodes_per_axis, vec![0.0; nodes_per_axis.iter().product()])?;
        for idx in 0..field.len() {
            field.values[idx] = f(&field.position(idx));
        }
        if field.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("grid field", "non-finite nodal value"));
        }
        Ok(field)
    }

    /// Same grid, every value replaced by `c`.
    pub fn constant_like(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = c);
        out
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            domain: self.domain.clone(),
            nodes: self.nodes,
            values,
            interp: self.interp,
        }
    }

    pub fn with_interp(mut self, interp: Interp) -> Self {
        self.interp = interp;
        self
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes[..self.dim()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.domain.period(axis) / self.nodes[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.domain == other.domain && self.nodes == other.nodes
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        [idx / self.nodes[1], idx % self.nodes[1]]
    }

    /// Flat index of a multi-index, wrapping each component periodically.
    pub fn flat_index(&self, i: isize, j: isize) -> usize {
        let i = i.rem_euclid(self.nodes[0] as isize) as usize;
        let j = j.rem_euclid(self.nodes[1] as isize) as usize;
        i * self.nodes[1] + j
    }

    pub fn position(&self, idx: usize) -> Vector {
        let m = self.multi_index(idx);
        std::array::from_fn(|a| if a < self.dim() { m[a] as f64 * self.spacing(a) } else { 0.0 })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖self − other‖∞`
    pub fn sup_distance(&self, other: &GridField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Cell index and fractional offset of `q` along `axis`.
    fn locate(&self, axis: usize, x: f64) -> (isize, f64) {
        let s = x / self.spacing(axis);
        let i = s.floor();
        (i as isize, s - i)
    }

    pub fn interpolate(&self, q: &Vector) -> f64 {
        match self.interp {
            Interp::Linear => self.linear(q),
            Interp::Cubic => self.cubic_value(q),
        }
    }

    fn linear(&self, q: &Vector) -> f64 {
        let (i, t) = self.locate(0, q[0]);
        if self.dim() == 1 {
            let a = self.values[self.flat_index(i, 0)];
            let b = self.values[self.flat_index(i + 1, 0)];
            return a + t * (b - a);
        }
        let (j, s) = self.locate(1, q[1]);
        let v = |di: isize, dj: isize| self.values[self.flat_index(i + di, j + dj)];
        (1.0 - t) * ((1.0 - s) * v(0, 0) + s * v(0, 1)) + t * ((1.0 - s) * v(1, 0) + s * v(1, 1))
    }

    fn cubic_value(&self, q: &Vector) -> f64 {
        let (i, t) = self.locate(0, q[0]);
        let wx = cubic_weights(t);
        if self.dim() == 1 {
            let mut acc = 0.0;
            for (k, w) in wx.iter().enumerate() {
                acc += w * self.values[self.flat_index(i + k as isize - 1, 0)];
            }
            return acc;
        }
        let (j, s) = self.locate(1, q[1]);
        let wy = cubic_weights(s);
        let mut acc = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            let mut row = 0.0;
            for (b, wb) in wy.iter().enumerate() {
                row += wb * self.values[self.flat_index(i + a as isize - 1, j + b as isize - 1)];
            }
            acc += wa * row;
        }
        acc
    }

    /// Value, gradient and Hessian of the interpolant. The linear interpolant
    /// reports its one-sided cell gradient and a zero Hessian.
    pub fn interpolate_jet(&self, q: &Vector) -> InterpJet {
        let dim = self.dim();
        let hx = self.spacing(0);
        let (i, t) = self.locate(0, q[0]);
        let mut jet = InterpJet {
            value: 0.0,
            grad: [0.0; MAX_DIM],
            hess: [[0.0; MAX_DIM]; MAX_DIM],
        };
        match self.interp {
            Interp::Linear => {
                jet.value = self.linear(q);
                if dim == 1 {
                    let a = self.values[self.flat_index(i, 0)];
                    let b = self.values[self.flat_index(i + 1, 0)];
                    jet.grad[0] = (b - a) / hx;
                } else {
                    let hy = self.spacing(1);
                    let (j, s) = self.locate(1, q[1]);
                    let v = |di: isize, dj: isize| self.values[self.flat_index(i + di, j + dj)];
                    jet.grad[0] = ((1.0 - s) * (v(1, 0) - v(0, 0)) + s * (v(1, 1) - v(0, 1))) / hx;
                    jet.grad[1] = ((1.0 - t) * (v(0, 1) - v(0, 0)) + t * (v(1, 1) - v(1, 0))) / hy;
                    jet.hess[0][1] = (v(1, 1) - v(1, 0) - v(0, 1) + v(0, 0)) / (hx * hy);
                    jet.hess[1][0] = jet.hess[0][1];
                }
            }
            Interp::Cubic => {
                let (w, dw, ddw) = (cubic_weights(t), cubic_weights_d1(t), cubic_weights_d2(t));
                if dim == 1 {
                    for k in 0..4 {
                        let u = self.values[self.flat_index(i + k as isize - 1, 0)];
                        jet.value += w[k] * u;
                        jet.grad[0] += dw[k] * u;
                        jet.hess[0][0] += ddw[k] * u;
                    }
                    jet.grad[0] /= hx;
                    jet.hess[0][0] /= hx * hx;
                } else {
                    let hy = self.spacing(1);
                    let (j, s) = self.locate(1, q[1]);
                    let (v, dv, ddv) = (cubic_weights(s), cubic_weights_d1(s), cubic_weights_d2(s));
                    for a in 0..4 {
                        let (mut r0, mut r1, mut r2) = (0.0, 0.0, 0.0);
                        for b in 0..4 {
                            let u = self.values[self.flat_index(i + a as isize - 1, j + b as isize - 1)];
                            r0 += v[b] * u;
                            r1 += dv[b] * u;
                            r2 += ddv[b] * u;
                        }
                        jet.value += w[a] * r0;
                        jet.grad[0] += dw[a] * r0;
                        jet.grad[1] += w[a] * r1;
                        jet.hess[0][0] += ddw[a] * r0;
                        jet.hess[0][1] += dw[a] * r1;
                        jet.hess[1][1] += w[a] * r2;
                    }
                    jet.grad[0] /= hx;
                    jet.grad[1] /= hy;
                    jet.hess[0][0] /= hx * hx;
                    jet.hess[0][1] /= hx * hy;
                    jet.hess[1][1] /= hy * hy;
                    jet.hess[1][0] = jet.hess[0][1];
                }
            }
        }
        jet
    }
}

/// Lagrange weights on nodes -1, 0, 1, 2 at offset `t ∈ [0,1)`.
#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let (tm1, tm2, tp1) = (t - 1.0, t - 2.0, t + 1.0);
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

#[inline]
fn cubic_weights_d1(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        -(3.0 * t2 - 6.0 * t + 2.0) / 6.0,
        (3.0 * t2 - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t2 - 2.0 * t - 2.0) / 2.0,
        (3.0 * t2 - 1.0) / 6.0,
    ]
}

#[inline]
fn cubic_weights_d2(t: f64) -> [f64; 4] {
    [-(t - 1.0), 3.0 * t - 2.0, -(3.0 * t - 1.0), t]
}

/// Per-axis derivative fields on the same nodes.
pub fn numerical_gradient(u: &GridField, method: GradientMethod) -> Vec<GridField> {
    (0..u.dim())
        .map(|axis| match method {
            GradientMethod::Centered => centered_derivative(u, axis),
            GradientMethod::Spectral => spectral_derivative(u, axis),
        })
        .collect()
}

fn centered_derivative(u: &GridField, axis: usize) -> GridField {
    let inv = 0.5 / u.spacing(axis);
    let values = (0..u.len())
        .map(|idx| {
            let [i, j] = u.multi_index(idx);
            let (i, j) = (i as isize, j as isize);
            let (fwd, bwd) = if axis == 0 {
                (u.flat_index(i + 1, j), u.flat_index(i - 1, j))
            } else {
                (u.flat_index(i, j + 1), u.flat_index(i, j - 1))
            };
            (u.values[fwd] - u.values[bwd]) * inv
        })
        .collect();
    u.with_values(values)
}

fn spectral_derivative(u: &GridField, axis: usize) -> GridField {
    let n = u.nodes[axis];
    let other = if axis == 0 { u.nodes[1] } else { u.nodes[0] };
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let scale = TAU / u.domain.period(axis);
    let mut out = vec![0.0; u.len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..other {
        let index = |k: usize| if axis == 0 { k * u.nodes[1] + o } else { o * u.nodes[1] + k };
        for (k, c) in line.iter_mut().enumerate() {
            *c = Complex64::new(u.values[index(k)], 0.0);
        }
        fwd.process(&mut line);
        for (k, c) in line.iter_mut().enumerate() {
            let freq = if 2 * k < n {
                k as f64
            } else if 2 * k == n {
                0.0
            } else {
                k as f64 - n as f64
            };
            *c *= Complex64::new(0.0, scale * freq / n as f64);
        }
        inv.process(&mut line);
        for (k, c) in line.iter().enumerate() {
            out[index(k)] = c.re;
        }
    }
    u.with_values(out)
}

/// Writes the field dump: `q_1[,q_2],u,du_1[,du_2]`, 17 significant digits.
pub fn field_to_csv(u: &GridField, grad: &[GridField]) -> String {
    let dim = u.dim();
    let mut out = String::new();
    let header: Vec<String> = (1..=dim)
        .map(|i| format!("q_{i}"))
        .chain(std::iter::once("u".to_string()))
        .chain((1..=dim).map(|i| format!("du_{i}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for idx in 0..u.len() {
        let q = u.position(idx);
        let mut cells: Vec<String> = q[..dim].iter().map(|x| fmt_f64(*x)).collect();
        cells.push(fmt_f64(u.values[idx]));
        cells.extend(grad.iter().map(|g| fmt_f64(g.values[idx])));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Reads a field dump written by [`field_to_csv`] on the given domain.
pub fn field_from_csv<R: BufRead>(domain: &TorusDomain, reader: R) -> Result<GridField> {
    let dim = domain.dim();
    let bad = |m: String| Error::config("field", m);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty field file".into()))?
        .map_err(|e| bad(e.to_string()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let u_col = cols.iter().position(|c| *c == "u").ok_or_else(|| bad("missing `u` column".into()))?;
    if u_col != dim {
        return Err(bad(format!("field has {u_col} coordinate columns, problem dimension is {dim}")));
    }
    let mut rows: Vec<(Vector, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?;
        if cells.len() != cols.len() {
            return Err(bad(format!("line {}: expected {} cells", lineno + 2, cols.len())));
        }
        let mut q = [0.0; MAX_DIM];
        q[..dim].copy_from_slice(&cells[..dim]);
        rows.push((q, cells[dim]));
    }
    let mut nodes = vec![0usize; dim];
    if dim == 1 {
        nodes[0] = rows.len();
    } else {
        let n1 = rows.iter().take_while(|(q, _)| q[0] == rows[0].0[0]).count();
        if n1 == 0 || rows.len() % n1 != 0 {
            return Err(bad("rows do not form a tensor grid".into()));
        }
        nodes[0] = rows.len() / n1;
        nodes[1] = n1;
    }
    let values = rows.iter().map(|r| r.1).collect();
    let field = GridField::new(domain.clone(), &nodes, values)?;
    for (idx, (q, _)) in rows.iter().enumerate() {
        let expect = field.position(idx);
        for a in 0..dim {
            if (q[a] - expect[a]).abs() > 1e-9 * domain.period(a) {
                return Err(bad(format!("row {idx}: coordinate {} does not match grid node {}", q[a], expect[a])));
            }
        }
    }
    Ok(field)
}

/// Fixed 17-significant-digit formatting used by every report.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, f: impl Fn(f64) -> f64) -> GridField {
        let d = TorusDomain::new(&[1.0]).unwrap();
        GridField::from_fn(&d, &[n], |q| f(q[0])).unwrap()
    }

    #[test]
    fn gradient_of_sine() {
        let u = line(128, |x| (TAU * x).sin());
        let c = &numerical_gradient(&u, GradientMethod::Centered)[0];
        let s = &numerical_gradient(&u, GradientMethod::Spectral)[0];
        let (mut ec, mut es) = (0.0f64, 0.0f64);
        for idx in 0..u.len() {
            let exact = TAU * (TAU * u.position(idx)[0]).cos();
            ec = ec.max((c.values()[idx] - exact).abs());
            es = es.max((s.values()[idx] - exact).abs());
        }
        assert!(ec <= 1e-2, "centered error {ec}");
        assert!(es <= 1e-10, "spectral error {es}");
    }

    #[test]
    fn spectral_gradient_of_cos4pi() {
        let u = line(128, |x| (2.0 * TAU * x).cos());
        let g = &numerical_gradient(&u, GradientMethod::Spectral)[0];
        for idx in 0..u.len() {
            let exact = -2.0 * TAU * (2.0 * TAU * u.position(idx)[0]).sin();
            assert!((g.values()[idx] - exact).abs() <= 1e-9);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let u = line(16, |_| 3.5);
        for m in [GradientMethod::Centered, GradientMethod::Spectral] {
            assert!(numerical_gradient(&u, m)[0].sup_norm() < 1e-13);
        }
    }

    #[test]
    fn cubic_reproduces_cubics_locally_and_jet_matches_fd() {
        let u = line(64, |x| (TAU * x).sin() + 0.3 * (2.0 * TAU * x).cos());
        let f = |x: f64| (TAU * x).sin() + 0.3 * (2.0 * TAU * x).cos();
        for &x in &[0.013, 0.37, 0.9999, -0.2, 1.4] {
            let err = (u.interpolate(&[x, 0.0]) - f(x)).abs();
            assert!(err < 1e-4, "x={x} err={err}");
            let jet = u.interpolate_jet(&[x, 0.0]);
            let e = 1e-6;
            let fd = (u.interpolate(&[x + e, 0.0]) - u.interpolate(&[x - e, 0.0])) / (2.0 * e);
            assert!((jet.grad[0] - fd).abs() < 1e-6);
            assert!((jet.value - u.interpolate(&[x, 0.0])).abs() < 1e-14);
        }
    }

    #[test]
    fn bicubic_jet_matches_fd() {
        let d = TorusDomain::new(&[1.0, 2.0]).unwrap();
        let u = GridField::from_fn(&d, &[16, 24], |q| (TAU * q[0]).sin() * (TAU * q[1] / 2.0).cos()).unwrap();
        let q = [0.31, 1.27];
        let jet = u.interpolate_jet(&q);
        let e = 1e-5;
        for a in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[a] += e;
            qm[a] -= e;
            let fd = (u.interpolate(&qp) - u.interpolate(&qm)) / (2.0 * e);
            assert!((jet.grad[a] - fd).abs() < 1e-6);
            let gfd = (u.interpolate_jet(&qp).grad[1 - a] - u.interpolate_jet(&qm).grad[1 - a]) / (2.0 * e);
            assert!((jet.hess[a][1 - a] - gfd).abs() < 1e-4);
        }
    }

    #[test]
    fn csv_round_trip_2d() {
        let d = TorusDomain::new(&[1.0, 0.5]).unwrap();
        let u = GridField::from_fn(&d, &[8, 6], |q| q[0] - 3.0 * q[1] * q[1]).unwrap();
        let g = numerical_gradient(&u, GradientMethod::Centered);
        let text = field_to_csv(&u, &g);
        assert!(text.starts_with("q_1,q_2,u,du_1,du_2\n"));
        let back = field_from_csv(&d, text.as_bytes()).unwrap();
        assert_eq!(back.nodes_per_axis(), &[8, 6]);
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn csv_rejects_wrong_dimension() {
        let d1 = TorusDomain::new(&[1.0]).unwrap();
        let d2 = TorusDomain::new(&[1.0, 1.0]).unwrap();
        let u = GridField::from_fn(&d1, &[8], |q| q[0]).unwrap();
        let text = field_to_csv(&u, &[]);
        assert!(field_from_csv(&d2, text.as_bytes()).is_err());
    }
}
