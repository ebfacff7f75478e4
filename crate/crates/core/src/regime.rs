//! The regime constant `r`, the hypothesis regime it falls in, the predicted
//! smoothness cap and the rest-point exponents of the damped flow.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::problem::{sym2_eigen, Problem, Vector};
use crate::scan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    NonPositive,
    Subcritical,
    Unsupported,
}

/// Predicted smoothness class of the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothnessCap {
    Finite(u32),
    Unbounded,
}

impl Serialize for SmoothnessCap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SmoothnessCap::Finite(k) => s.serialize_u32(*k),
            SmoothnessCap::Unbounded => s.serialize_str("Unbounded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub r: f64,
    pub regime: Regime,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// `None` only for the unsupported regime.
    pub k_cap: Option<SmoothnessCap>,
    #[serde(serialize_with = "serialize_exponents")]
    pub exponents: [Complex64; 2],
    pub argmax_q: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deficit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn serialize_exponents<S: Serializer>(e: &[Complex64; 2], s: S) -> Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = e.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(s)
}

/// Largest eigenvalue of the potential Hessian.
pub fn hessian_max_eigenvalue(prob: &Problem, q: &Vector) -> f64 {
    let h = prob.potential.hess(q);
    if prob.dim() == 1 {
        h[0][0]
    } else {
        sym2_eigen(&h).1
    }
}

/// Maximum over the torus of the largest Hessian eigenvalue of `V`, and where it is attained.
pub fn compute_r(prob: &Problem, scan_per_axis: usize) -> (f64, Vector) {
    scan::maximize(&prob.domain, scan_per_axis.max(8), |q| hessian_max_eigenvalue(prob, q))
}

/// Classifies `r` against `α²/4`. `exponents` and `argmax_q` are filled with
/// the rest-point values for `r` at the origin; `analyze` overwrites the location.
pub fn classify_regime(r: f64, alpha: f64) -> RegimeReport {
    let threshold = alpha * alpha / 4.0;
    let exponents = linearized_exponents(r, alpha);
    let mut report = RegimeReport {
        r,
        regime: Regime::Unsupported,
        s: None,
        k_cap: None,
        exponents,
        argmax_q: Vec::new(),
        deficit: None,
        note: None,
    };
    if r <= 0.0 {
        report.regime = Regime::NonPositive;
        report.k_cap = Some(SmoothnessCap::Unbounded);
        report.note = Some("smoothness limited only by the potential, which is analytic".into());
    } else if r < threshold {
        let s = (1.0 - 4.0 * r / (alpha * alpha)).sqrt();
        report.regime = Regime::Subcritical;
        report.s = Some(s);
        report.k_cap = Some(SmoothnessCap::Finite(strict_floor(2.0 / (1.0 - s))));
    } else {
        report.deficit = Some(r - threshold);
    }
    report
}

/// Greatest integer strictly below `x` (for `x > 0`).
fn strict_floor(x: f64) -> u32 {
    let f = x.floor();
    // treat values within rounding of an integer as that integer
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-12 * x.abs().max(1.0) {
        (nearest as u32).saturating_sub(1)
    } else {
        f as u32
    }
}

/// Roots of `μ² + αμ + ρ = 0`, sorted by real part descending.
pub fn linearized_exponents(rho_local: f64, alpha: f64) -> [Complex64; 2] {
    let half = -0.5 * alpha;
    let disc = 0.25 * alpha * alpha - rho_local;
    if disc >= 0.0 {
        let root = disc.sqrt();
        [Complex64::new(half + root, 0.0), Complex64::new(half - root, 0.0)]
    } else {
        let root = (-disc).sqrt();
        [Complex64::new(half, root), Complex64::new(half, -root)]
    }
}

/// Full report for a problem: `r` by scan, classification, location of the maximum.
pub fn analyze(prob: &Problem, scan_per_axis: usize) -> RegimeReport {
    let (r, q) = compute_r(prob, scan_per_axis);
    let mut report = classify_regime(r, prob.alpha);
    report.argmax_q = q[..prob.dim()].to_vec();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn worked_examples() {
        let r = classify_regime(-1.0, 1.0);
        assert_eq!(r.regime, Regime::NonPositive);
        assert_eq!(r.k_cap, Some(SmoothnessCap::Unbounded));

        let r = classify_regime(3.0 / 16.0, 1.0);
        assert_eq!(r.regime, Regime::Subcritical);
        assert!((r.s.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.k_cap, Some(SmoothnessCap::Finite(3)));

        let r = classify_regime(0.25, 1.0);
        assert_eq!(r.regime, Regime::Unsupported);
        assert_eq!(r.deficit, Some(0.0));

        let r = classify_regime(2.0 / 9.0, 1.0);
        assert!((r.s.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.k_cap, Some(SmoothnessCap::Finite(2)));
    }

    #[test]
    fn exponent_examples() {
        let e = linearized_exponents(3.0 / 16.0, 1.0);
        assert_eq!(e, [Complex64::new(-0.25, 0.0), Complex64::new(-0.75, 0.0)]);
        let e = linearized_exponents(0.0, 1.0);
        assert_eq!(e, [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)]);
        let e = linearized_exponents(0.5, 1.0);
        assert_eq!(e, [Complex64::new(-0.5, 0.5), Complex64::new(-0.5, -0.5)]);
    }

    #[test]
    fn r_for_single_cosine() {
        let d = TorusDomain::new(&[1.0]).unwrap();
        let v = FourierPotential::new(&d, vec![FourierMode { k: [1, 0], coeff: Complex64::new(0.05, 0.0) }]).unwrap();
        let p = Problem::new(d, v, Metric::identity(1), DriftForm { a: [0.0; 2] }, 5.0).unwrap();
        let (r, q) = compute_r(&p, 64);
        assert!((r - 0.4 * PI * PI).abs() < 1e-9);
        assert!((q[0] - 0.5).abs() < 1e-6);
        let rep = analyze(&p, 64);
        assert_eq!(rep.regime, Regime::Subcritical);
        assert_eq!(rep.k_cap, Some(SmoothnessCap::Finite(5)));
    }

    #[test]
    fn r_for_constant_and_separable() {
        let d = TorusDomain::new(&[1.0, 1.0]).unwrap();
        let c = FourierPotential::constant(&d, 0.3);
        let p = Problem::new(d.clone(), c, Metric::identity(2), DriftForm { a: [0.0; 2] }, 1.0).unwrap();
        assert_eq!(compute_r(&p, 16).0, 0.0);

        let eps = 0.05;
        let modes = vec![
            FourierMode { k: [1, 0], coeff: Complex64::new(eps / 2.0, 0.0) },
            FourierMode { k: [0, 1], coeff: Complex64::new(eps / 2.0, 0.0) },
        ];
        let v = FourierPotential::new(&d, modes).unwrap();
        let p = Problem::new(d, v, Metric::identity(2), DriftForm { a: [0.0; 2] }, 4.0).unwrap();
        let (r, _) = compute_r(&p, 32);
        assert!((r - 4.0 * PI * PI * eps).abs() < 1e-9);
    }

    #[test]
    fn serialized_field_names() {
        let json = serde_json::to_value(classify_regime(3.0 / 16.0, 1.0)).unwrap();
        for key in ["r", "regime", "s", "k_cap", "exponents", "argmax_q"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["regime"], "Subcritical");
        assert_eq!(json["k_cap"], 3);
    }
}
