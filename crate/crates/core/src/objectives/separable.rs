//! Coordinate-separable test functions with a closed-form minimum at 0.

use std::ops::Range;
use std::sync::Arc;

use super::{BlockPartition, ConvexityClass, Objective, ProblemInstance};
use crate::error::Result;

/// `f(x) = Σ x_j² / (1 + x_j²)`: smooth, bounded, nonconvex for `|x_j| > 1/√3`.
#[derive(Debug, Clone)]
pub struct NonconvexObjective {
    dim: usize,
}

impl NonconvexObjective {
    pub fn second_derivative(t: f64) -> f64 {
        let s = 1.0 + t * t;
        (2.0 - 6.0 * t * t) / (s * s * s)
    }
}

impl Objective for NonconvexObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|t| t * t / (1.0 + t * t)).sum()
    }

    fn partial_gradient(&self, x: &[f64], range: Range<usize>, out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(&x[range]) {
            let s = 1.0 + t * t;
            *o = 2.0 * t / (s * s);
        }
    }

    fn project_to_argmin(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; x.len()])
    }
}

/// Nonconvex fixture with `L = max|f″| = 2`, attained at the origin.
pub fn make_nonconvex_test(dim: usize, num_blocks: usize) -> Result<ProblemInstance> {
    let partition = BlockPartition::contiguous(dim, num_blocks)?;
    Ok(ProblemInstance::new(
        format!("nonconvex-{dim}d"),
        Arc::new(NonconvexObjective { dim }),
        partition,
        2.0,
        ConvexityClass::Nonconvex,
    )?
    .with_optimal_value(0.0))
}

/// `f(x) = Σ h(x_j)` with `h(t) = t⁴` on `[−1, 1]`, continued as the
/// matching quadratic `1 + 4(|t|−1) + 6(|t|−1)²` outside.
///
/// Convex, coercive, `C²` with `h″ ≤ 12`, and flat at the minimizer, so
/// there is no strong convexity of any kind and gradient methods converge
/// sublinearly.
#[derive(Debug, Clone)]
pub struct FlatConvexObjective {
    dim: usize,
}

impl FlatConvexObjective {
    fn h(t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            t.powi(4)
        } else {
            let u = a - 1.0;
            1.0 + 4.0 * u + 6.0 * u * u
        }
    }

    fn dh(t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            4.0 * t * t * t
        } else {
            t.signum() * (4.0 + 12.0 * (a - 1.0))
        }
    }
}

impl Objective for FlatConvexObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&t| Self::h(t)).sum()
    }

    fn partial_gradient(&self, x: &[f64], range: Range<usize>, out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(&x[range]) {
            *o = Self::dh(t);
        }
    }

    fn project_to_argmin(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; x.len()])
    }
}

pub fn make_flat_convex(dim: usize, num_blocks: usize) -> Result<ProblemInstance> {
    let partition = BlockPartition::contiguous(dim, num_blocks)?;
    Ok(ProblemInstance::new(
        format!("flat-convex-{dim}d"),
        Arc::new(FlatConvexObjective { dim }),
        partition,
        12.0,
        ConvexityClass::Convex,
    )?
    .with_optimal_value(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonconvex_curvature_bound_on_grid() {
        let max = (-40_000..=40_000)
            .map(|i| NonconvexObjective::second_derivative(i as f64 * 1e-3).abs())
            .fold(0.0, f64::max);
        assert!((max - 2.0).abs() < 1e-12);
        let p = make_nonconvex_test(4, 2).unwrap();
        assert_eq!(p.lipschitz(), 2.0);
        assert_eq!(p.convexity(), ConvexityClass::Nonconvex);
        // concave region exists
        assert!(NonconvexObjective::second_derivative(1.0) < 0.0);
    }

    #[test]
    fn flat_convex_is_c1_at_the_seam() {
        for s in [1.0, -1.0] {
            let lo = FlatConvexObjective::dh(s * (1.0 - 1e-12));
            let hi = FlatConvexObjective::dh(s * (1.0 + 1e-12));
            assert!((lo - hi).abs() < 1e-9);
            assert!((FlatConvexObjective::h(s * (1.0 + 1e-12)) - 1.0).abs() < 1e-10);
        }
        let p = make_flat_convex(3, 3).unwrap();
        assert_eq!(p.eval(&[0.0; 3]).unwrap(), 0.0);
        assert_eq!(p.eval(&[2.0, 0.5, -1.0]).unwrap(), 11.0 + 0.0625 + 1.0);
    }
}
