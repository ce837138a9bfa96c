use rand::Rng;

use super::{BlockRule, DelaySpec, EventTrace, TraceRecord};
use crate::error::{Error, Result};

/// Synthesizes a trace with block order from `rule` and current delay `j(k)`
/// drawn from `spec`.
///
/// Every coordinate gets the same delay `min(j(k), k)`, i.e. reads are
/// consistent. Timestamps are synthetic: update `k` completes at time `k`
/// after reading at `k − j(k)`.
pub fn inject_delays<R: Rng + ?Sized>(
    rule: &BlockRule,
    num_blocks: usize,
    spec: &DelaySpec,
    horizon: usize,
    rng: &mut R,
) -> Result<EventTrace> {
    if num_blocks == 0 {
        return Err(Error::InvalidArgument("at least one block is required".into()));
    }
    let sampler = spec.sampler()?;
    let mut blocks = rule.generator(num_blocks)?;
    let mut trace = EventTrace::new(num_blocks);
    trace.records.reserve(horizon);
    for k in 0..horizon {
        let block = blocks.next_block(rng);
        let j = sampler.draw(k, rng).min(k);
        trace.records.push(TraceRecord {
            k,
            block,
            delays: vec![j; num_blocks],
            t_read: (k - j) as f64,
            t_complete: k as f64,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::BoundedLaw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_bound_is_synchronous() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = DelaySpec::Bounded {
            tau: 0,
            law: BoundedLaw::Uniform,
        };
        let t = inject_delays(&BlockRule::uniform(), 3, &spec, 100, &mut rng).unwrap();
        assert_eq!(t.max_delay(), 0);
    }

    #[test]
    fn sequence_passthrough_with_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = DelaySpec::DeterministicSequence { j_of_k: vec![0, 1, 2] };
        let t = inject_delays(&BlockRule::Cyclic, 2, &spec, 9, &mut rng).unwrap();
        assert_eq!(t.current_delays(), vec![0, 1, 2, 0, 1, 2, 0, 1, 2]);
        let spec = DelaySpec::DeterministicSequence { j_of_k: vec![5] };
        let t = inject_delays(&BlockRule::Cyclic, 2, &spec, 7, &mut rng).unwrap();
        assert_eq!(t.current_delays(), vec![0, 1, 2, 3, 4, 5, 5]);
        t.validate().unwrap();
    }
}
