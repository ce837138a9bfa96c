//! Block-structured smooth objectives with exact block gradients.
//!
//! Every built-in problem declares its global gradient Lipschitz constant
//! `L`, its convexity class, the restricted strong convexity constant `ν`
//! when one exists, and `min f` when it is known in closed form.

mod dataset;
mod logistic;
mod partition;
mod quadratic;
mod separable;

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use dataset::{IndexBase, SparseDataset, SparseRow};
pub use logistic::{make_logistic, LogisticObjective};
pub use partition::BlockPartition;
pub use quadratic::{make_quadratic, random_spd, QuadraticObjective};
pub use separable::{make_flat_convex, make_nonconvex_test, FlatConvexObjective, NonconvexObjective};

/// Convexity class of a problem, from weakest to strongest assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityClass {
    Nonconvex,
    Convex,
    RestrictedStronglyConvex,
}

/// A smooth function with an exact partial-gradient oracle.
///
/// Implementations must be pure: the runtime evaluates gradients from many
/// worker threads on private snapshots of the iterate.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∂f/∂x_j` for every `j` in `range` to `out[j - range.start]`.
    fn partial_gradient(&self, x: &[f64], range: Range<usize>, out: &mut [f64]);

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.partial_gradient(x, 0..self.dim(), out);
    }

    /// Euclidean projection onto `argmin f`, when the argmin set is known.
    fn project_to_argmin(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// An objective together with its block partition and declared constants.
#[derive(Clone)]
pub struct ProblemInstance {
    id: String,
    objective: Arc<dyn Objective>,
    partition: BlockPartition,
    lipschitz: f64,
    convexity: ConvexityClass,
    rsc_nu: Option<f64>,
    optimal_value: Option<f64>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("id", &self.id)
            .field("dim", &self.partition.total_dim())
            .field("num_blocks", &self.partition.num_blocks())
            .field("lipschitz", &self.lipschitz)
            .field("convexity", &self.convexity)
            .field("rsc_nu", &self.rsc_nu)
            .field("optimal_value", &self.optimal_value)
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        id: impl Into<String>,
        objective: Arc<dyn Objective>,
        partition: BlockPartition,
        lipschitz: f64,
        convexity: ConvexityClass,
    ) -> Result<Self> {
        if partition.total_dim() != objective.dim() {
            return Err(Error::DimensionMismatch {
                expected: objective.dim(),
                got: partition.total_dim(),
            });
        }
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        if convexity == ConvexityClass::RestrictedStronglyConvex {
            return Err(Error::InvalidArgument(
                "restricted strong convexity needs ν; use with_rsc".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            objective,
            partition,
            lipschitz,
            convexity,
            rsc_nu: None,
            optimal_value: None,
        })
    }

    /// Declares `ν`-restricted strong convexity.
    pub fn with_rsc(mut self, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidArgument(format!("ν must be positive, got {nu}")));
        }
        self.convexity = ConvexityClass::RestrictedStronglyConvex;
        self.rsc_nu = Some(nu);
        Ok(self)
    }

    /// Downgrades the declared class, e.g. to treat an RSC quadratic as a
    /// merely convex baseline. Dropping to a weaker class forgets `ν`.
    pub fn with_convexity(mut self, class: ConvexityClass) -> Result<Self> {
        match class {
            ConvexityClass::RestrictedStronglyConvex if self.rsc_nu.is_none() => {
                return Err(Error::InvalidArgument(
                    "restricted strong convexity needs ν; use with_rsc".into(),
                ))
            }
            ConvexityClass::RestrictedStronglyConvex => {}
            _ => self.rsc_nu = None,
        }
        self.convexity = class;
        Ok(self)
    }

    pub fn with_optimal_value(mut self, value: f64) -> Self {
        self.optimal_value = Some(value);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Re-partitions the same objective.
    pub fn with_partition(mut self, partition: BlockPartition) -> Result<Self> {
        if partition.total_dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: partition.total_dim(),
            });
        }
        self.partition = partition;
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.partition.total_dim()
    }

    pub fn num_blocks(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn convexity(&self) -> ConvexityClass {
        self.convexity
    }

    pub fn rsc_nu(&self) -> Option<f64> {
        self.rsc_nu
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.optimal_value
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.objective.value(x))
    }

    pub fn grad_block(&self, x: &[f64], block: usize) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let range = self.partition.block(block)?;
        let mut out = vec![0.0; range.len()];
        self.objective.partial_gradient(x, range, &mut out);
        Ok(out)
    }

    /// Like [`grad_block`](Self::grad_block) but writes into a caller buffer.
    pub fn grad_block_into(&self, x: &[f64], block: usize, out: &mut Vec<f64>) -> Result<()> {
        self.check_dim(x)?;
        let range = self.partition.block(block)?;
        out.clear();
        out.resize(range.len(), 0.0);
        self.objective.partial_gradient(x, range, out);
        Ok(())
    }

    pub fn full_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.objective.gradient(x, &mut out);
        Ok(out)
    }

    pub fn project_to_argmin(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(self.objective.project_to_argmin(x))
    }
}

/// Outcome of [`validate_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Uniform sample from the Euclidean ball of the given radius.
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = linalg::norm(&v);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c *= r / n);
    }
    v
}

/// Estimates the gradient Lipschitz constant by sampling pairs in the ball of
/// `radius` and reports whether the declared `L` dominates every ratio.
pub fn validate_lipschitz(
    problem: &ProblemInstance,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<LipschitzReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = problem.dim();
    let mut max_ratio = 0.0f64;
    let mut pairs = 0;
    let mut gx = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    for _ in 0..n_samples {
        let x = sample_ball(&mut rng, dim, radius);
        let y = sample_ball(&mut rng, dim, radius);
        let dxy = linalg::dist(&x, &y);
        if dxy == 0.0 {
            continue;
        }
        problem.objective.gradient(&x, &mut gx);
        problem.objective.gradient(&y, &mut gy);
        max_ratio = max_ratio.max(linalg::dist(&gx, &gy) / dxy);
        pairs += 1;
    }
    Ok(LipschitzReport {
        max_ratio,
        pairs,
        pass: max_ratio <= problem.lipschitz * (1.0 + 1e-9),
    })
}

/// Central finite-difference gradient with step `h_j = 1e-6·(1+|x_j|)`.
///
/// Uses only function values, so it serves as an oracle for the analytic
/// gradients.
pub fn finite_difference_gradient(problem: &ProblemInstance, x: &[f64]) -> Result<Vec<f64>> {
    problem.check_dim(x)?;
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let up = problem.objective.value(&probe);
        probe[j] = x[j] - h;
        let down = problem.objective.value(&probe);
        probe[j] = x[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity2() -> ProblemInstance {
        make_quadratic(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            BlockPartition::contiguous(2, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn half_norm_squared_values() {
        let p = identity2();
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(p.eval(&[3.0, 4.0]).unwrap(), 12.5);
    }

    #[test]
    fn block_gradient_of_half_norm() {
        let p = identity2();
        assert_eq!(p.grad_block(&[3.0, 4.0], 0).unwrap(), vec![3.0]);
        assert_eq!(p.full_grad(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn separable_quadratic_block_gradient() {
        // x1^2 + 2 x2^2 = 1/2 x^T diag(2, 4) x
        let p = make_quadratic(
            vec![vec![2.0, 0.0], vec![0.0, 4.0]],
            vec![0.0, 0.0],
            BlockPartition::contiguous(2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(p.grad_block(&[1.0, 1.0], 1).unwrap(), vec![4.0]);
    }

    #[test]
    fn errors_on_bad_inputs() {
        let p = identity2();
        assert!(matches!(
            p.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            p.grad_block(&[1.0, 1.0], 2),
            Err(Error::BlockOutOfRange { index: 2, num_blocks: 2 })
        ));
        assert!(p.full_grad(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn lipschitz_validation_identity() {
        let p = identity2();
        let r = validate_lipschitz(&p, 200, 3.0, 1).unwrap();
        assert_eq!(r.max_ratio, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn lipschitz_validation_rejects_small_constant() {
        let p = make_quadratic(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            BlockPartition::contiguous(2, 1).unwrap(),
        )
        .unwrap();
        // Same gradient map, declared L = 0.5.
        let under = ProblemInstance::new(
            "under",
            p.objective().clone(),
            p.partition().clone(),
            0.5,
            ConvexityClass::Convex,
        )
        .unwrap();
        let r = validate_lipschitz(&under, 50, 1.0, 2).unwrap();
        assert!(!r.pass);
        assert_eq!(r.max_ratio, 1.0);
    }

    #[test]
    fn instance_invariants() {
        let p = identity2();
        let obj = p.objective().clone();
        let part = p.partition().clone();
        assert!(ProblemInstance::new("x", obj.clone(), part.clone(), 0.0, ConvexityClass::Convex).is_err());
        assert!(ProblemInstance::new(
            "x",
            obj.clone(),
            part.clone(),
            1.0,
            ConvexityClass::RestrictedStronglyConvex
        )
        .is_err());
        let wrong = BlockPartition::contiguous(3, 1).unwrap();
        assert!(ProblemInstance::new("x", obj, wrong, 1.0, ConvexityClass::Convex).is_err());
        let convex = p.clone().with_convexity(ConvexityClass::Convex).unwrap();
        assert_eq!(convex.rsc_nu(), None);
    }

    #[test]
    fn finite_differences_match_on_quadratic() {
        let p = identity2();
        let fd = finite_difference_gradient(&p, &[0.3, -2.0]).unwrap();
        assert!((fd[0] - 0.3).abs() < 1e-8);
        assert!((fd[1] + 2.0).abs() < 1e-8);
    }
}
