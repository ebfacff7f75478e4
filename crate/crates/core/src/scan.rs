//! Grid scan plus golden-section refinement for maximizing a function on the torus.

use crate::problem::{TorusDomain, Vector};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const REFINE_TOL: f64 = 1e-10;
const MAX_PASSES: usize = 40;

/// Maximizes `f` over the torus: a regular scan with `per_axis` nodes per axis,
/// then golden-section refinement (coordinate-wise passes in 2D) inside one
/// scan cell of the best node. Ties on the scan go to the lexicographically
/// smallest node. The result is never below the best scanned value.
pub fn maximize<F>(domain: &TorusDomain, per_axis: usize, f: F) -> (f64, Vector)
where
    F: Fn(&Vector) -> f64,
{
    let dim = domain.dim();
    let per_axis = per_axis.max(1);
    let h: Vector = std::array::from_fn(|i| {
        if i < dim {
            domain.period(i) / per_axis as f64
        } else {
            0.0
        }
    });

    let mut best = f64::NEG_INFINITY;
    let mut arg = [0.0; 2];
    let n1 = if dim == 2 { per_axis } else { 1 };
    for i in 0..per_axis {
        for j in 0..n1 {
            let q = [i as f64 * h[0], j as f64 * h[1]];
            let v = f(&q);
            if v > best {
                best = v;
                arg = q;
            }
        }
    }

    let mut q = arg;
    let mut val = best;
    for _ in 0..MAX_PASSES {
        let before = q;
        for axis in 0..dim {
            let lo = q[axis] - h[axis];
            let hi = q[axis] + h[axis];
            let (x, v) = golden_max(lo, hi, |x| {
                let mut p = q;
                p[axis] = x;
                f(&p)
            });
            if v > val {
                q[axis] = x;
                val = v;
            }
        }
        let moved = (0..dim).map(|i| (q[i] - before[i]).abs()).fold(0.0, f64::max);
        if dim == 1 || moved <= REFINE_TOL {
            break;
        }
    }
    (val, domain.wrap_unchecked(&q))
}

/// Golden-section search for a maximum of `g` on `[lo, hi]`.
fn golden_max<G: Fn(f64) -> f64>(mut lo: f64, mut hi: f64, g: G) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    while hi - lo > REFINE_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = g(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = g(x);
    if fx >= f1.max(f2) {
        (x, fx)
    } else if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_off_grid_maximum() {
        let d = TorusDomain::new(&[1.0]).unwrap();
        let (v, q) = maximize(&d, 16, |q| (2.0 * std::f64::consts::PI * (q[0] - 0.3)).cos());
        assert!((v - 1.0).abs() < 1e-14);
        assert!((q[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn two_dimensional_separable() {
        let d = TorusDomain::new(&[1.0, 2.0]).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let (v, q) = maximize(&d, 12, |q| (tau * (q[0] - 0.71)).cos() + (tau * (q[1] - 1.13) / 2.0).cos());
        assert!((v - 2.0).abs() < 1e-12);
        assert!((q[0] - 0.71).abs() < 1e-6);
        assert!((q[1] - 1.13).abs() < 1e-6);
    }
}
