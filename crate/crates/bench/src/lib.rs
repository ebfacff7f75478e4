//! Shared fixtures for the criterion benches in `benches/`.

use dhj_core::problem::{DriftForm, FourierMode, FourierPotential, Metric};
use dhj_core::{GridField, Problem, TorusDomain};
use num_complex::Complex64;

/// `V = 0.1 cos(2πq)` on the unit circle with `A = 1`, `a = 0`, `α = 5`.
pub fn tc1() -> Problem {
    let d = TorusDomain::new(&[1.0]).expect("unit period");
    let v = FourierPotential::new(
        &d,
        vec![FourierMode {
            k: [1, 0],
            coeff: Complex64::new(0.05, 0.0),
        }],
    )
    .expect("single mode");
    Problem::new(d, v, Metric::identity(1), DriftForm { a: [0.0; 2] }, 5.0).expect("valid problem")
}

/// A smooth field close to the solution of [`tc1`], on `n` nodes.
pub fn tc1_field(n: usize) -> GridField {
    let prob = tc1();
    GridField::from_fn(&prob.domain, &[n], |q| -prob.potential.eval(q) / prob.alpha).expect("valid grid")
}
