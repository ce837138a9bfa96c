//! Deterministic event-driven simulation of asynchronous agents.
//!
//! Each agent picks a block, reads every block of the shared vector (taking a
//! snapshot of the global completion counter per block), computes for the
//! block's cost, and completes. Completions are numbered `k = 0, 1, …` in time
//! order, and `j(k, b) = k − snapshot_b`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BlockGenerator, BlockRule, EventTrace, TraceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockAssignment {
    /// Every agent draws its next block from the shared rule.
    RandomEachStep,
    /// Agent `a` only ever updates `blocks[a]`, in rule order.
    FixedPartition { blocks: Vec<Vec<usize>> },
}

/// Agents, their block assignment and per-block compute costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentModel {
    pub num_agents: usize,
    pub assignment: BlockAssignment,
    /// Compute time of each block; its length fixes `N`.
    pub compute_time: Vec<f64>,
    /// Relative uniform jitter: a step costs `cost·(1 + jitter·u)`, `u ∈ [−1, 1]`.
    #[serde(default)]
    pub jitter: f64,
    /// Time to read the full vector; block `b` is read at offset
    /// `read_duration·b/N` into the read window.
    #[serde(default)]
    pub read_duration: f64,
}

impl AgentModel {
    pub fn new(num_agents: usize, compute_time: Vec<f64>) -> Self {
        Self {
            num_agents,
            assignment: BlockAssignment::RandomEachStep,
            compute_time,
            jitter: 0.0,
            read_duration: 0.0,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.compute_time.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::InvalidArgument("at least one agent is required".into()));
        }
        if self.compute_time.is_empty() {
            return Err(Error::InvalidArgument("compute_time must list every block".into()));
        }
        if self.compute_time.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidArgument("compute times must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::InvalidArgument("jitter must lie in [0, 1)".into()));
        }
        if !(self.read_duration.is_finite() && self.read_duration >= 0.0) {
            return Err(Error::InvalidArgument("read_duration must be nonnegative".into()));
        }
        if let BlockAssignment::FixedPartition { blocks } = &self.assignment {
            if blocks.len() != self.num_agents {
                return Err(Error::InvalidArgument(format!(
                    "{} block lists for {} agents",
                    blocks.len(),
                    self.num_agents
                )));
            }
            let covered: BTreeSet<usize> = blocks.iter().flatten().copied().collect();
            if covered.len() != self.num_blocks() || covered.iter().any(|&b| b >= self.num_blocks()) {
                return Err(Error::InvalidArgument(
                    "fixed partition must cover exactly the blocks 0..N".into(),
                ));
            }
            if blocks.iter().any(Vec::is_empty) {
                return Err(Error::InvalidArgument("every agent needs at least one block".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    /// Reading; `next` blocks already snapshotted.
    Reading { next: usize },
    Computing { done_at: f64 },
}

#[derive(Debug)]
struct Agent {
    block: usize,
    start: f64,
    phase: Phase,
    snapshot: Vec<usize>,
}

/// Runs the simulation until `horizon` updates have completed.
///
/// Ties at equal times are resolved completions first, then reads, and within
/// each kind by lowest agent index.
pub fn simulate<R: Rng + ?Sized>(
    agents: &AgentModel,
    rule: &BlockRule,
    horizon: usize,
    rng: &mut R,
) -> Result<EventTrace> {
    agents.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let n = agents.num_blocks();
    let mut shared: Option<BlockGenerator> = None;
    let mut own: Vec<BlockGenerator> = Vec::new();
    match &agents.assignment {
        BlockAssignment::RandomEachStep => shared = Some(rule.generator(n)?),
        BlockAssignment::FixedPartition { blocks } => {
            for list in blocks {
                own.push(rule.generator_over(list.clone(), n)?);
            }
        }
    }
    let mut pick = |a: usize, rng: &mut R| match shared.as_mut() {
        Some(g) => g.next_block(rng),
        None => own[a].next_block(rng),
    };

    let mut pool: Vec<Agent> = (0..agents.num_agents)
        .map(|a| Agent {
            block: pick(a, rng),
            start: 0.0,
            phase: Phase::Reading { next: 0 },
            snapshot: vec![0; n],
        })
        .collect();

    let read_time = |ag: &Agent, b: usize| ag.start + agents.read_duration * b as f64 / n as f64;
    let mut trace = EventTrace::new(n);
    let mut counter = 0usize;
    while counter < horizon {
        // (time, kind, agent) with completions (0) before reads (1)
        let (a, _, _) = pool
            .iter()
            .enumerate()
            .map(|(a, ag)| match ag.phase {
                Phase::Computing { done_at } => (a, done_at, 0u8),
                Phase::Reading { next } => (a, read_time(ag, next), 1u8),
            })
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.2.cmp(&y.2)).then(x.0.cmp(&y.0)))
            .expect("at least one agent");
        match pool[a].phase {
            Phase::Reading { next } => {
                pool[a].snapshot[next] = counter;
                pool[a].phase = if next + 1 == n {
                    let mut cost = agents.compute_time[pool[a].block];
                    if agents.jitter > 0.0 {
                        cost *= 1.0 + agents.jitter * rng.random_range(-1.0..=1.0);
                    }
                    Phase::Computing {
                        done_at: pool[a].start + agents.read_duration + cost,
                    }
                } else {
                    Phase::Reading { next: next + 1 }
                };
            }
            Phase::Computing { done_at } => {
                let ag = &pool[a];
                trace.records.push(TraceRecord {
                    k: counter,
                    block: ag.block,
                    delays: ag.snapshot.iter().map(|&s| counter - s).collect(),
                    t_read: ag.start,
                    t_complete: done_at,
                });
                counter += 1;
                let block = pick(a, rng);
                let ag = &mut pool[a];
                ag.block = block;
                ag.start = done_at;
                ag.phase = Phase::Reading { next: 0 };
            }
        }
    }
    Ok(trace)
}

/// Reachable first two completions for two agents on three blocks of cost
/// 2, 3 and 4 that start together. Blocks are labelled 1, 2, 3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example1Report {
    pub costs: [u32; 3],
    pub combinations: usize,
    pub reachable: BTreeSet<(usize, usize)>,
    pub unreachable: BTreeSet<(usize, usize)>,
}

impl Example1Report {
    pub fn is_reachable(&self, i1: usize, i2: usize) -> bool {
        self.reachable.contains(&(i1, i2))
    }
}

/// Exhaustive search over both agents' first two block choices (3⁴ cases).
///
/// Each agent's first two completions happen at `c(a₁)` and `c(a₁)+c(a₂)`.
/// The four completion times are merged, and at equal times every order is
/// admitted, so the reachable set does not depend on how ties are broken.
pub fn enumerate_example1() -> Example1Report {
    let costs = [2u32, 3, 4];
    let mut reachable = BTreeSet::new();
    let mut combinations = 0;
    for a1 in 0..3 {
        for a2 in 0..3 {
            for b1 in 0..3 {
                for b2 in 0..3 {
                    combinations += 1;
                    let mut events = [
                        (costs[a1], a1),
                        (costs[a1] + costs[a2], a2),
                        (costs[b1], b1),
                        (costs[b1] + costs[b2], b2),
                    ];
                    events.sort();
                    let first_t = events[0].0;
                    // every event tied at the earliest time can come first
                    for f in events.iter().filter(|e| e.0 == first_t) {
                        let mut rest: Vec<_> = events.to_vec();
                        let pos = rest.iter().position(|e| e == f).expect("present");
                        rest.remove(pos);
                        let second_t = rest.iter().map(|e| e.0).min().expect("three left");
                        for s in rest.iter().filter(|e| e.0 == second_t) {
                            reachable.insert((f.1 + 1, s.1 + 1));
                        }
                    }
                }
            }
        }
    }
    let unreachable = (1..=3)
        .flat_map(|i| (1..=3).map(move |j| (i, j)))
        .filter(|p| !reachable.contains(p))
        .collect();
    Example1Report {
        costs,
        combinations,
        reachable,
        unreachable,
    }
}

/// Agent model of the three-block, two-agent example.
pub fn example1_agents() -> AgentModel {
    AgentModel::new(2, vec![2.0, 3.0, 4.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_agent_sees_no_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = simulate(&AgentModel::new(1, vec![1.0, 2.0, 0.5]), &BlockRule::uniform(), 50, &mut rng).unwrap();
        assert!(t.records.iter().all(|r| r.j_max() == 0));
        t.validate().unwrap();
    }

    #[test]
    fn two_equal_agents_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = simulate(&AgentModel::new(2, vec![1.0, 1.0]), &BlockRule::Cyclic, 6, &mut rng).unwrap();
        assert_eq!(t.current_delays(), vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn read_window_spreads_snapshots() {
        let mut m = AgentModel::new(2, vec![1.0, 1.0]);
        m.read_duration = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = simulate(&m, &BlockRule::Cyclic, 20, &mut rng).unwrap();
        t.validate().unwrap();
        assert!(t.max_delay() >= 1);
    }

    #[test]
    fn example1_enumeration() {
        let r = enumerate_example1();
        assert_eq!(r.combinations, 81);
        assert!(!r.is_reachable(2, 1));
        assert!(r.is_reachable(2, 2));
        assert!(r.is_reachable(2, 3));
        for j in 1..=3 {
            assert!(r.is_reachable(1, j), "(1, {j})");
        }
    }

    #[test]
    fn fixed_partition_must_cover() {
        let mut m = AgentModel::new(2, vec![1.0, 1.0, 1.0]);
        m.assignment = BlockAssignment::FixedPartition {
            blocks: vec![vec![0], vec![1]],
        };
        assert!(m.validate().is_err());
    }
}
