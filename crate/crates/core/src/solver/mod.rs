//! Trace-driven async-BCD: each trace record names the block `i_k` and the
//! per-block read delays `j(k, ·)`; the solver rebuilds `x̂^k` from history
//! and applies `x_{i_k} ← x_{i_k} − (γ_k/L)∇_{i_k} f(x̂^k)`.

mod policy;
mod run;
mod state;

pub use policy::{
    d_sequence, gamma_bounded, gamma_stochastic_unbounded, EpsilonSpec, EpsilonTable, StepPolicy, StepSchedule,
};
pub use run::{run, RunMeta, RunOptions, RunRecord, RunRow};
pub use state::{step, SolverState, StepOutput};
