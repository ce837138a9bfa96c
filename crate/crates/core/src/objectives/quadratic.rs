use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{BlockPartition, ConvexityClass, Objective, ProblemInstance};
use crate::error::{Error, Result};

/// `f(x) = ½ xᵀQx − bᵀx` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    dim: usize,
    /// Row-major `Q`.
    q: Vec<f64>,
    b: Vec<f64>,
    minimizer: Vec<f64>,
    /// Orthonormal basis of `ker Q`, one vector per entry.
    null_basis: Vec<Vec<f64>>,
}

impl QuadraticObjective {
    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.q[j * self.dim..(j + 1) * self.dim]
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..self.dim {
            let qx: f64 = self.row(j).iter().zip(x).map(|(a, b)| a * b).sum();
            quad += x[j] * qx;
            lin += self.b[j] * x[j];
        }
        0.5 * quad - lin
    }

    fn partial_gradient(&self, x: &[f64], range: Range<usize>, out: &mut [f64]) {
        for (o, j) in out.iter_mut().zip(range) {
            let qx: f64 = self.row(j).iter().zip(x).map(|(a, b)| a * b).sum();
            *o = qx - self.b[j];
        }
    }

    fn project_to_argmin(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut p = self.minimizer.clone();
        for v in &self.null_basis {
            let c: f64 = v.iter().zip(x.iter().zip(&self.minimizer)).map(|(vi, (xi, mi))| vi * (xi - mi)).sum();
            p.iter_mut().zip(v).for_each(|(pi, vi)| *pi += c * vi);
        }
        Some(p)
    }
}

/// Builds `½ xᵀQx − bᵀx` with `L = λ_max(Q)`.
///
/// `Q ≻ 0` gives restricted strong convexity with `ν = λ_min(Q)`. A singular
/// `Q` is still restricted strongly convex with `ν` equal to its smallest
/// nonzero eigenvalue, provided `b ∈ range(Q)` so that `min f` is finite.
pub fn make_quadratic(q: Vec<Vec<f64>>, b: Vec<f64>, partition: BlockPartition) -> Result<ProblemInstance> {
    let dim = b.len();
    if q.len() != dim || q.iter().any(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: q.len(),
        });
    }
    let flat: Vec<f64> = q.into_iter().flatten().collect();
    let m = DMatrix::from_row_slice(dim, dim, &flat);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (&m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::NonSymmetric(asym));
    }
    let eig = SymmetricEigen::new(m.clone());
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    if lambda_min < -1e-10 * lambda_max.abs().max(1.0) {
        return Err(Error::NotPositiveSemidefinite(lambda_min));
    }
    if lambda_max <= 0.0 {
        return Err(Error::InvalidArgument("Q = 0 has no positive curvature".into()));
    }
    let zero_tol = 1e-10 * lambda_max;

    // Pseudo-inverse solve through the eigenbasis.
    let bv = DVector::from_vec(b.clone());
    let mut minimizer = DVector::zeros(dim);
    let mut null_basis = Vec::new();
    let mut nu = f64::INFINITY;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if lam > zero_tol {
            minimizer += v * (v.dot(&bv) / lam);
            nu = nu.min(lam);
        } else {
            null_basis.push(v.iter().copied().collect::<Vec<_>>());
        }
    }
    let residual = (&m * &minimizer - &bv).norm();
    if residual > 1e-9 * (1.0 + bv.norm()) {
        return Err(Error::InvalidArgument(
            "b has a component in ker Q; f is unbounded below".into(),
        ));
    }
    let optimal_value = -0.5 * bv.dot(&minimizer);
    let obj = QuadraticObjective {
        dim,
        q: flat,
        b,
        minimizer: minimizer.iter().copied().collect(),
        null_basis,
    };
    ProblemInstance::new(
        format!("quadratic-{dim}d"),
        Arc::new(obj),
        partition,
        lambda_max,
        ConvexityClass::Convex,
    )?
    .with_rsc(nu)
    .map(|p| p.with_optimal_value(optimal_value))
}

/// Random symmetric matrix `UᵀΛU` with eigenvalues evenly spaced in
/// `[eig_min, eig_max]` and a Haar-ish random orthogonal `U`.
pub fn random_spd(dim: usize, eig_min: f64, eig_max: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = g.qr().q();
    let lambdas = DVector::from_fn(dim, |i, _| {
        if dim == 1 {
            eig_max
        } else {
            eig_min + (eig_max - eig_min) * i as f64 / (dim - 1) as f64
        }
    });
    let m = &u * DMatrix::from_diagonal(&lambdas) * u.transpose();
    // Exact symmetry for the validator.
    let sym = (&m + m.transpose()) * 0.5;
    (0..dim)
        .map(|i| (0..dim).map(|j| sym[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn identity_constants() {
        let p = make_quadratic(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            BlockPartition::contiguous(2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(p.lipschitz(), 1.0);
        assert_eq!(p.rsc_nu(), Some(1.0));
        assert_eq!(p.optimal_value(), Some(0.0));
        assert_eq!(p.convexity(), ConvexityClass::RestrictedStronglyConvex);
    }

    #[test]
    fn singular_q_uses_smallest_nonzero_eigenvalue() {
        let p = make_quadratic(
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            vec![0.0, 0.0],
            BlockPartition::contiguous(2, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(p.convexity(), ConvexityClass::RestrictedStronglyConvex);
        assert!((p.rsc_nu().unwrap() - 1.0).abs() < 1e-14);
        // argmin is the x2 axis
        let proj = p.project_to_argmin(&[3.0, -2.0]).unwrap().unwrap();
        assert!(linalg::dist(&proj, &[0.0, -2.0]) < 1e-14);
    }

    #[test]
    fn rejects_invalid_matrices() {
        let part = BlockPartition::contiguous(2, 1).unwrap();
        assert!(matches!(
            make_quadratic(vec![vec![1.0, 0.5], vec![0.0, 1.0]], vec![0.0, 0.0], part.clone()),
            Err(Error::NonSymmetric(_))
        ));
        assert!(matches!(
            make_quadratic(vec![vec![1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0], part.clone()),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        // b outside range(Q): unbounded below
        assert!(make_quadratic(vec![vec![1.0, 0.0], vec![0.0, 0.0]], vec![0.0, 1.0], part).is_err());
    }

    #[test]
    fn minimizer_and_optimal_value_with_linear_term() {
        // f = 1/2 (2 x1^2 + 4 x2^2) - (2 x1 + 4 x2), argmin (1, 1), min -3
        let p = make_quadratic(
            vec![vec![2.0, 0.0], vec![0.0, 4.0]],
            vec![2.0, 4.0],
            BlockPartition::contiguous(2, 2).unwrap(),
        )
        .unwrap();
        assert!((p.optimal_value().unwrap() + 3.0).abs() < 1e-12);
        assert!((p.eval(&[1.0, 1.0]).unwrap() + 3.0).abs() < 1e-12);
        let g = p.full_grad(&[1.0, 1.0]).unwrap();
        assert!(linalg::norm(&g) < 1e-12);
    }

    #[test]
    fn random_spd_spectrum() {
        let q = random_spd(6, 1.0, 4.0, 9);
        let p = make_quadratic(q, vec![0.0; 6], BlockPartition::contiguous(6, 3).unwrap()).unwrap();
        assert!((p.lipschitz() - 4.0).abs() < 1e-10);
        assert!((p.rsc_nu().unwrap() - 1.0).abs() < 1e-10);
    }
}
