//! Asynchronous block coordinate descent (async-BCD) under bounded,
//! stochastic-unbounded and deterministic-unbounded delays.
//!
//! The crate is organized bottom-up:
//!
//! - [`objectives`]: block-structured smooth test problems with exact block
//!   gradients and declared constants (`L`, `ν`, `min f`).
//! - [`schedule`]: delay laws and their tail moments, block rules, an
//!   event-driven simulator of asynchronous agents, and trace validators.
//! - [`solver`]: the delayed block update `x_{i_k} ← x_{i_k} − (γ_k/L)∇_{i_k} f(x̂^k)`
//!   replayed along a trace, with the three step-size policies.
//! - [`analysis`]: the four Lyapunov functions, their coefficients, descent
//!   slack checks, rate fits and the continuous-time delayed flow.
//! - [`parallel`]: a real shared-memory runtime that measures delays.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod parallel;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
