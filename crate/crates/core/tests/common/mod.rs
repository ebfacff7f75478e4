#![allow(dead_code)]

use dhj_core::problem::{DriftForm, FourierMode, FourierPotential, Metric, Problem, TorusDomain};
use num_complex::Complex64;

pub fn mode(k: [i32; 2], re: f64, im: f64) -> FourierMode {
    FourierMode {
        k,
        coeff: Complex64::new(re, im),
    }
}

pub fn problem_1d(modes: Vec<FourierMode>, metric: f64, drift: f64, alpha: f64) -> Problem {
    let d = TorusDomain::new(&[1.0]).unwrap();
    let v = FourierPotential::new(&d, modes).unwrap();
    Problem::new(d, v, Metric::new(&[vec![metric]]).unwrap(), DriftForm { a: [drift, 0.0] }, alpha).unwrap()
}

/// `V = 0.1 cos(2πq)`, `A = 1`, `a = 0`, `α = 5` on the unit circle.
pub fn tc1() -> Problem {
    problem_1d(vec![mode([1, 0], 0.05, 0.0)], 1.0, 0.0, 5.0)
}

/// `V = 0.05 (cos 2πq₁ + cos 2πq₂)`, identity metric, `α = 4` on the unit square torus.
pub fn smoke_2d() -> Problem {
    let d = TorusDomain::new(&[1.0, 1.0]).unwrap();
    let v = FourierPotential::new(&d, vec![mode([1, 0], 0.025, 0.0), mode([0, 1], 0.025, 0.0)]).unwrap();
    Problem::new(d, v, Metric::identity(2), DriftForm { a: [0.0; 2] }, 4.0).unwrap()
}

pub fn constant_problem(dim: usize, c: f64, metric: &[Vec<f64>], drift: [f64; 2], alpha: f64) -> Problem {
    let periods = vec![1.0; dim];
    let d = TorusDomain::new(&periods).unwrap();
    let v = FourierPotential::constant(&d, c);
    Problem::new(d, v, Metric::new(metric).unwrap(), DriftForm { a: drift }, alpha).unwrap()
}

pub const TC1_JSON: &str = r#"{"dim":1,"periods":[1.0],"potential":{"type":"fourier","modes":[{"k":[1],"re":0.05,"im":0.0}]},"metric":[[1.0]],"drift":[0.0],"alpha":5.0}"#;
