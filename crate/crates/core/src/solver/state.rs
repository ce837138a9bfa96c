use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::objectives::{BlockPartition, ProblemInstance};

/// The current iterate plus enough per-block history to rebuild any
/// delayed read `x̂^k`.
///
/// Only block `i_k` changes at step `k`, so history is stored per block as
/// the sequence of values together with the iteration at which each value
/// took effect.
#[derive(Debug, Clone)]
pub struct SolverState {
    partition: BlockPartition,
    x: Vec<f64>,
    k: usize,
    /// `history[b]`: `(from, value)` with `value` holding for iterates `from…`.
    history: Vec<VecDeque<(usize, Vec<f64>)>>,
    /// Keeps at least this many past iterates reconstructible; `None` keeps all.
    depth: Option<usize>,
    oldest: usize,
}

impl SolverState {
    pub fn new(partition: BlockPartition, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != partition.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: partition.total_dim(),
                got: x0.len(),
            });
        }
        let history = partition
            .blocks()
            .iter()
            .map(|r| VecDeque::from([(0, x0[r.clone()].to_vec())]))
            .collect();
        Ok(Self {
            partition,
            x: x0,
            k: 0,
            history,
            depth: None,
            oldest: 0,
        })
    }

    /// Bounds history to the last `depth` iterates.
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Block `b` of iterate `m ≤ k`.
    pub fn block_at(&self, b: usize, m: usize) -> Result<&[f64]> {
        let h = &self.history[b];
        let pos = h.partition_point(|(from, _)| *from <= m);
        if pos == 0 || m < self.oldest {
            return Err(Error::InsufficientHistory {
                requested: m,
                oldest: self.oldest,
            });
        }
        Ok(&h[pos - 1].1)
    }

    /// `x̂ = (x_1^{k−j(k,1)}, …, x_N^{k−j(k,N)})`, with `k − j` clamped at 0.
    pub fn reconstruct_delayed_iterate(&self, delays: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.x.len()];
        self.reconstruct_into(delays, &mut out)?;
        Ok(out)
    }

    pub fn reconstruct_into(&self, delays: &[usize], out: &mut [f64]) -> Result<()> {
        let n = self.partition.num_blocks();
        if delays.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: delays.len(),
            });
        }
        for (b, (range, &j)) in self.partition.blocks().iter().zip(delays).enumerate() {
            let m = self.k.saturating_sub(j);
            out[range.clone()].copy_from_slice(self.block_at(b, m)?);
        }
        Ok(())
    }

    /// Applies `x_b ← x_b − scale·g` and returns `Δ^k` restricted to block `b`.
    pub(crate) fn apply(&mut self, b: usize, scale: f64, g: &[f64]) -> Vec<f64> {
        let range = self.partition.blocks()[b].clone();
        let mut delta = Vec::with_capacity(g.len());
        for (xj, gj) in self.x[range.clone()].iter_mut().zip(g) {
            let old = *xj;
            *xj -= scale * gj;
            delta.push(*xj - old);
        }
        self.k += 1;
        self.history[b].push_back((self.k, self.x[range].to_vec()));
        if let Some(d) = self.depth {
            let keep_from = self.k.saturating_sub(d);
            for h in &mut self.history {
                while h.len() > 1 && h[1].0 <= keep_from {
                    h.pop_front();
                }
            }
            self.oldest = self.oldest.max(keep_from);
        }
        delta
    }
}

/// Everything a single update produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub block: usize,
    pub gamma: f64,
    /// `Δ^k` on block `i_k` (zero elsewhere).
    pub delta: Vec<f64>,
    pub delta_norm: f64,
    pub block_grad_norm: f64,
    /// `‖x^k − x̂^k‖₂`.
    pub d_norm: f64,
}

/// One async-BCD update `x_{i_k} ← x_{i_k} − (γ_k/L)∇_{i_k} f(x̂^k)`.
pub fn step(
    state: &mut SolverState,
    problem: &ProblemInstance,
    block: usize,
    delays: &[usize],
    gamma: f64,
) -> Result<StepOutput> {
    let n = problem.num_blocks();
    if block >= n {
        return Err(Error::BlockOutOfRange { index: block, num_blocks: n });
    }
    let x_hat = state.reconstruct_delayed_iterate(delays)?;
    let d_norm = crate::linalg::dist(state.x(), &x_hat);
    let g = problem.grad_block(&x_hat, block)?;
    let scale = gamma / problem.lipschitz();
    let delta = state.apply(block, scale, &g);
    Ok(StepOutput {
        block,
        gamma,
        delta_norm: crate::linalg::norm(&delta),
        block_grad_norm: crate::linalg::norm(&g),
        delta,
        d_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;

    fn half_norm() -> ProblemInstance {
        make_quadratic(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            BlockPartition::contiguous(2, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn plain_step() {
        let p = half_norm();
        let mut s = SolverState::new(p.partition().clone(), vec![3.0, 4.0]).unwrap();
        let out = step(&mut s, &p, 0, &[0, 0], 0.5).unwrap();
        assert_eq!(s.x(), &[1.5, 4.0]);
        assert_eq!(out.delta, vec![-1.5]);
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn stale_read() {
        let p = half_norm();
        let mut s = SolverState::new(p.partition().clone(), vec![1.0, 1.0]).unwrap();
        // x¹ = (0, 1)
        step(&mut s, &p, 0, &[0, 0], 1.0).unwrap();
        assert_eq!(s.x(), &[0.0, 1.0]);
        assert_eq!(s.reconstruct_delayed_iterate(&[1, 0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(s.reconstruct_delayed_iterate(&[0, 0]).unwrap(), vec![0.0, 1.0]);
        // clamped at x⁰
        assert_eq!(s.reconstruct_delayed_iterate(&[7, 7]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_gradient_leaves_iterate() {
        let p = half_norm();
        let mut s = SolverState::new(p.partition().clone(), vec![0.0, 2.0]).unwrap();
        let out = step(&mut s, &p, 0, &[0, 0], 0.5).unwrap();
        assert_eq!(out.delta_norm, 0.0);
        assert_eq!(s.x(), &[0.0, 2.0]);
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn bounded_depth_reports_missing_history() {
        let p = half_norm();
        let mut s = SolverState::new(p.partition().clone(), vec![1.0, 1.0]).unwrap().with_depth(2);
        for k in 0..6 {
            step(&mut s, &p, k % 2, &[0, 0], 0.5).unwrap();
        }
        assert!(s.reconstruct_delayed_iterate(&[2, 2]).is_ok());
        assert!(matches!(
            s.reconstruct_delayed_iterate(&[5, 0]),
            Err(Error::InsufficientHistory { .. })
        ));
    }
}
