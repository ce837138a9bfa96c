//! Delay models, block rules and iteration traces.
//!
//! Traces come from two sources: [`simulate`] lets delays emerge from agent
//! timing (so delays depend on which block was updated), while
//! [`inject_delays`] draws the current delay from a prescribed law.

mod blocks;
mod delay;
mod inject;
mod simulator;
mod trace;

pub use blocks::{
    empirical_block_conditional, empirical_block_conditional_pooled, sample_block_stochastic,
    validate_ecsd, validate_essentially_cyclic, BlockGenerator, BlockRule, ConditionalTable, CyclicReport,
    Witness,
};
pub use delay::{
    tail_moments, BoundedLaw, DelaySampler, DelaySpec, TailLaw, TailMoments, DEFAULT_TAIL_TOL, MAX_TAIL_TERMS,
};
pub(crate) use delay::power_tail;
pub use inject::inject_delays;
pub use simulator::{enumerate_example1, example1_agents, simulate, AgentModel, BlockAssignment, Example1Report};
pub(crate) use trace::{join_delays, split_delays, TRACE_HEADER};
pub use trace::{EventTrace, TraceRecord};
