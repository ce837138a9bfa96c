//! Block rules: generators, the essentially-cyclic and ECSD validators, and
//! an empirical check of block choice against the state `τ` steps back.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EventTrace;
use crate::error::{Error, Result};

/// How the block `i_k` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockRule {
    /// Independent draws, uniform unless `weights` is given.
    Stochastic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// `0, 1, …, N−1, 0, 1, …`.
    Cyclic,
    /// A fresh random permutation of the blocks for every epoch.
    RandomPermutation,
    /// A fixed sequence, repeated.
    Sequence { order: Vec<usize> },
}

impl BlockRule {
    pub fn uniform() -> Self {
        BlockRule::Stochastic { weights: None }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, BlockRule::Stochastic { .. })
    }

    /// A generator over all `n` blocks.
    pub fn generator(&self, n: usize) -> Result<BlockGenerator> {
        self.generator_over((0..n).collect(), n)
    }

    /// A generator restricted to `blocks` (of `n` total). Weights, if any, are
    /// restricted to the subset and renormalized.
    pub fn generator_over(&self, blocks: Vec<usize>, n: usize) -> Result<BlockGenerator> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("block rule over an empty set".into()));
        }
        if let Some(&b) = blocks.iter().find(|&&b| b >= n) {
            return Err(Error::BlockOutOfRange { index: b, num_blocks: n });
        }
        let kind = match self {
            BlockRule::Stochastic { weights: None } => GenKind::Uniform,
            BlockRule::Stochastic { weights: Some(w) } => {
                validate_weights(w, n)?;
                let sub: Vec<f64> = blocks.iter().map(|&b| w[b]).collect();
                GenKind::Weighted(
                    WeightedIndex::new(&sub).map_err(|e| Error::InvalidWeights(e.to_string()))?,
                )
            }
            BlockRule::Cyclic => GenKind::Cyclic,
            BlockRule::RandomPermutation => GenKind::Permutation(Vec::new()),
            BlockRule::Sequence { order } => {
                if order.is_empty() {
                    return Err(Error::InvalidArgument("empty block sequence".into()));
                }
                if let Some(&b) = order.iter().find(|&&b| b >= n) {
                    return Err(Error::BlockOutOfRange { index: b, num_blocks: n });
                }
                GenKind::Sequence(order.clone())
            }
        };
        Ok(BlockGenerator {
            blocks,
            kind,
            pos: 0,
        })
    }
}

#[derive(Debug, Clone)]
enum GenKind {
    Uniform,
    Weighted(WeightedIndex<f64>),
    Cyclic,
    Permutation(Vec<usize>),
    Sequence(Vec<usize>),
}

/// Stateful block chooser produced by [`BlockRule::generator`].
#[derive(Debug, Clone)]
pub struct BlockGenerator {
    blocks: Vec<usize>,
    kind: GenKind,
    pos: usize,
}

impl BlockGenerator {
    pub fn next_block<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let m = self.blocks.len();
        match &mut self.kind {
            GenKind::Uniform => self.blocks[rng.random_range(0..m)],
            GenKind::Weighted(w) => self.blocks[w.sample(rng)],
            GenKind::Cyclic => {
                let b = self.blocks[self.pos % m];
                self.pos += 1;
                b
            }
            GenKind::Permutation(perm) => {
                if self.pos % m == 0 {
                    *perm = self.blocks.clone();
                    perm.shuffle(rng);
                }
                let b = perm[self.pos % m];
                self.pos += 1;
                b
            }
            GenKind::Sequence(order) => {
                let b = order[self.pos % order.len()];
                self.pos += 1;
                b
            }
        }
    }

    /// The next `len` blocks.
    pub fn take<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) -> Vec<usize> {
        (0..len).map(|_| self.next_block(rng)).collect()
    }
}

fn validate_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::InvalidWeights(format!("{} weights for {n} blocks", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidWeights("weights must be positive".into()));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// One draw of `i ∈ {0, …, n−1}`, with probability `weights[i]` (uniform by
/// default), independent of everything drawn before.
pub fn sample_block_stochastic<R: Rng + ?Sized>(rng: &mut R, n: usize, weights: Option<&[f64]>) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidArgument("no blocks to sample".into()));
    }
    match weights {
        None => Ok(rng.random_range(0..n)),
        Some(w) => {
            validate_weights(w, n)?;
            let idx = WeightedIndex::new(w).map_err(|e| Error::InvalidWeights(e.to_string()))?;
            Ok(idx.sample(rng))
        }
    }
}

/// First index `K(i, t)` in window `t` at which block `i` was updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub block: usize,
    pub window: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicReport {
    pub valid: bool,
    pub windows: usize,
    pub witnesses: Vec<Witness>,
    /// `(block, window)` pairs with no qualifying update.
    pub missing: Vec<(usize, usize)>,
}

impl CyclicReport {
    pub fn witness(&self, block: usize, window: usize) -> Option<usize> {
        self.witnesses
            .iter()
            .find(|w| w.block == block && w.window == window)
            .map(|w| w.k)
    }
}

fn window_check(seq: &[usize], n: usize, n_prime: usize, ok: impl Fn(usize) -> bool) -> Result<CyclicReport> {
    if n == 0 || n_prime < n {
        return Err(Error::InvalidArgument(format!("need N′ ≥ N ≥ 1, got N = {n}, N′ = {n_prime}")));
    }
    if seq.len() < n_prime {
        return Err(Error::InsufficientSamples(format!(
            "sequence of length {} is shorter than one window of {n_prime}",
            seq.len()
        )));
    }
    let windows = seq.len() / n_prime;
    let mut witnesses = Vec::new();
    let mut missing = Vec::new();
    for t in 0..windows {
        let mut first = vec![None; n];
        for k in t * n_prime..(t + 1) * n_prime {
            let b = seq[k];
            if b < n && first[b].is_none() && ok(k) {
                first[b] = Some(k);
            }
        }
        for (i, f) in first.into_iter().enumerate() {
            match f {
                Some(k) => witnesses.push(Witness { block: i, window: t, k }),
                None => missing.push((i, t)),
            }
        }
    }
    Ok(CyclicReport {
        valid: missing.is_empty(),
        windows,
        witnesses,
        missing,
    })
}

/// Checks that every block appears in each full window of `n_prime`
/// consecutive updates. A short final window is ignored.
pub fn validate_essentially_cyclic(seq: &[usize], n: usize, n_prime: usize) -> Result<CyclicReport> {
    window_check(seq, n, n_prime, |_| true)
}

/// Essentially cyclic with a witness whose current delay is below `b`.
pub fn validate_ecsd(trace: &EventTrace, n_prime: usize, b: usize) -> Result<CyclicReport> {
    if b == 0 {
        return Err(Error::InvalidArgument("B must be at least 1".into()));
    }
    let seq = trace.blocks();
    let delays = trace.current_delays();
    window_check(&seq, trace.num_blocks, n_prime, |k| delays[k] < b)
}

/// Frequencies of `i_k` conditioned on the block updated at `k − τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub tau: usize,
    /// `counts[s][i]`: updates of block `i` when block `s` was updated `τ` steps earlier.
    pub counts: Vec<Vec<u64>>,
    pub frequencies: Vec<Vec<f64>>,
    pub samples: u64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ConditionalTable {
    /// Smallest conditional frequency over strata that have data.
    pub fn min_frequency(&self) -> f64 {
        self.counts
            .iter()
            .zip(&self.frequencies)
            .filter(|(c, _)| c.iter().sum::<u64>() > 0)
            .flat_map(|(_, f)| f.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Single-trace form of [`empirical_block_conditional_pooled`].
pub fn empirical_block_conditional(trace: &EventTrace, tau: usize) -> Result<ConditionalTable> {
    empirical_block_conditional_pooled(std::slice::from_ref(trace), tau)
}

/// Pools `(i_{k−τ}, i_k)` pairs over several traces and tests uniformity of
/// `i_k` within each stratum with Pearson's chi-square.
pub fn empirical_block_conditional_pooled(traces: &[EventTrace], tau: usize) -> Result<ConditionalTable> {
    let n = traces.first().map(|t| t.num_blocks).ok_or(Error::EmptyTrace)?;
    if tau == 0 {
        return Err(Error::InvalidArgument("τ must be at least 1".into()));
    }
    let mut counts = vec![vec![0u64; n]; n];
    for t in traces {
        if t.num_blocks != n {
            return Err(Error::Mismatch("traces have different block counts".into()));
        }
        for k in tau..t.len() {
            counts[t.records[k - tau].block][t.records[k].block] += 1;
        }
    }
    let samples: u64 = counts.iter().flatten().sum();
    if samples < 5 * (n as u64) {
        return Err(Error::InsufficientSamples(format!(
            "{samples} conditional samples for {n} blocks"
        )));
    }
    let mut chi_square = 0.0;
    let mut strata = 0;
    let mut frequencies = vec![vec![0.0; n]; n];
    for (s, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        strata += 1;
        let expected = total as f64 / n as f64;
        for (i, &c) in row.iter().enumerate() {
            frequencies[s][i] = c as f64 / total as f64;
            chi_square += (c as f64 - expected).powi(2) / expected;
        }
    }
    let dof = strata * (n - 1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        1.0 - dist.cdf(chi_square)
    };
    Ok(ConditionalTable {
        tau,
        counts,
        frequencies,
        samples,
        chi_square,
        dof,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cyclic_examples() {
        let r = validate_essentially_cyclic(&[0, 1, 2, 2, 1, 0], 3, 3).unwrap();
        assert!(r.valid);
        assert_eq!(r.witness(0, 0), Some(0));
        assert_eq!(r.witness(2, 1), Some(3));
        let r = validate_essentially_cyclic(&[0, 0, 1, 0], 2, 2).unwrap();
        assert!(!r.valid);
        assert_eq!(r.missing, vec![(1, 0)]);
        assert!(validate_essentially_cyclic(&[0, 1], 3, 2).is_err());
    }

    #[test]
    fn generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = BlockRule::Cyclic.generator(3).unwrap();
        assert_eq!(g.take(7, &mut rng), vec![0, 1, 2, 0, 1, 2, 0]);
        let mut g = BlockRule::Sequence { order: vec![2, 0] }.generator(3).unwrap();
        assert_eq!(g.take(3, &mut rng), vec![2, 0, 2]);
        let mut g = BlockRule::RandomPermutation.generator(5).unwrap();
        for _ in 0..10 {
            let mut epoch = g.take(5, &mut rng);
            epoch.sort_unstable();
            assert_eq!(epoch, vec![0, 1, 2, 3, 4]);
        }
        let mut g = BlockRule::Cyclic.generator_over(vec![4, 1], 5).unwrap();
        assert_eq!(g.take(3, &mut rng), vec![4, 1, 4]);
    }

    #[test]
    fn weights_are_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_block_stochastic(&mut rng, 2, Some(&[0.5, 0.6])).is_err());
        assert!(sample_block_stochastic(&mut rng, 2, Some(&[1.0, 0.0])).is_err());
        assert!(sample_block_stochastic(&mut rng, 3, Some(&[0.5, 0.5])).is_err());
        assert_eq!(sample_block_stochastic(&mut rng, 1, None).unwrap(), 0);
    }
}
