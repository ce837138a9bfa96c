use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{BlockPartition, ConvexityClass, Objective, ProblemInstance, SparseDataset};
use crate::error::{Error, Result};

/// Gram matrices beyond this size fall back to the Frobenius bound.
const MAX_DENSE_GRAM: usize = 2000;

/// `f(w) = Σ_r log(1 + exp(−y_r a_rᵀw)) + (λ/2)‖w‖²`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    data: SparseDataset,
    lambda: f64,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn dataset(&self) -> &SparseDataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.n_features
    }

    fn value(&self, w: &[f64]) -> f64 {
        let loss: f64 = self
            .data
            .rows
            .iter()
            .map(|r| softplus(-r.label * r.dot(w)))
            .sum();
        loss + 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn partial_gradient(&self, w: &[f64], range: Range<usize>, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in &self.data.rows {
            let coef = -r.label * sigmoid(-r.label * r.dot(w));
            // indices are sorted, so only the slice inside `range` is visited
            let lo = r.indices.partition_point(|&j| j < range.start);
            for (&j, v) in r.indices[lo..].iter().zip(&r.values[lo..]) {
                if j >= range.end {
                    break;
                }
                out[j - range.start] += coef * v;
            }
        }
        for (o, j) in out.iter_mut().zip(range) {
            *o += self.lambda * w[j];
        }
    }
}

/// `λ_max(AᵀA)`, computed on whichever Gram matrix (`AᵀA` or `AAᵀ`) is
/// smaller. Very large problems get the Frobenius norm, a valid upper bound.
fn spectral_norm_sq(data: &SparseDataset) -> f64 {
    let m = data.len();
    let d = data.n_features;
    if m.min(d) > MAX_DENSE_GRAM {
        return data.rows.iter().flat_map(|r| r.values.iter()).map(|v| v * v).sum();
    }
    let gram = if d <= m {
        let mut g = DMatrix::<f64>::zeros(d, d);
        for r in &data.rows {
            for (a, &i) in r.indices.iter().enumerate() {
                for (b, &j) in r.indices.iter().enumerate() {
                    g[(i, j)] += r.values[a] * r.values[b];
                }
            }
        }
        g
    } else {
        let mut dense = DMatrix::<f64>::zeros(m, d);
        for (i, r) in data.rows.iter().enumerate() {
            for (&j, &v) in r.indices.iter().zip(&r.values) {
                dense[(i, j)] = v;
            }
        }
        &dense * dense.transpose()
    };
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0)
}

/// Regularized logistic regression with `L = ¼λ_max(AᵀA) + λ`.
///
/// With `λ > 0` the problem is `λ`-strongly convex; otherwise convex.
pub fn make_logistic(data: SparseDataset, lambda: f64, partition: BlockPartition) -> Result<ProblemInstance> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("λ must be ≥ 0, got {lambda}")));
    }
    let lipschitz = 0.25 * spectral_norm_sq(&data) + lambda;
    let id = format!("logistic-{}x{}", data.len(), data.n_features);
    let p = ProblemInstance::new(
        id,
        Arc::new(LogisticObjective { data, lambda }),
        partition,
        lipschitz,
        ConvexityClass::Convex,
    )?;
    if lambda > 0.0 {
        p.with_rsc(lambda)
    } else {
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::IndexBase;

    #[test]
    fn zero_weights_give_m_log_two() {
        let data = SparseDataset::synthetic(37, 6, 0.5, 1);
        let p = make_logistic(data, 0.0, BlockPartition::contiguous(6, 3).unwrap()).unwrap();
        let f = p.eval(&[0.0; 6]).unwrap();
        assert!((f - 37.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_constant_matches_dense_formula() {
        let text = "+1 0:1 1:2\n-1 0:3\n+1 1:-1\n";
        let data = SparseDataset::parse(text.as_bytes(), IndexBase::Zero).unwrap();
        let p = make_logistic(data, 0.5, BlockPartition::contiguous(2, 2).unwrap()).unwrap();
        // AᵀA = [[10, 2], [2, 5]], λ_max = (15 + √(25 + 16))/2
        let lam = (15.0 + 41f64.sqrt()) / 2.0;
        assert!((p.lipschitz() - (0.25 * lam + 0.5)).abs() < 1e-12);
        assert_eq!(p.rsc_nu(), Some(0.5));
    }

    #[test]
    fn wide_data_uses_row_gram() {
        // more features than samples
        let data = SparseDataset::synthetic(4, 9, 0.7, 5);
        let p = make_logistic(data.clone(), 0.0, BlockPartition::contiguous(9, 3).unwrap()).unwrap();
        let mut dense = DMatrix::<f64>::zeros(4, 9);
        for (i, r) in data.rows.iter().enumerate() {
            for (&j, &v) in r.indices.iter().zip(&r.values) {
                dense[(i, j)] = v;
            }
        }
        let want = SymmetricEigen::new(dense.transpose() * &dense).eigenvalues.max();
        assert!((p.lipschitz() - 0.25 * want).abs() < 1e-10);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = SparseDataset {
            rows: vec![],
            n_features: 3,
        };
        assert!(matches!(
            make_logistic(data, 0.0, BlockPartition::contiguous(3, 1).unwrap()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn stable_for_large_margins() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
