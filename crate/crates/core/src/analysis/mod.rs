//! Verification of the descent lemmas and convergence rates.
//!
//! - [`coefficients`]: `ε`, `δ`, `δ̄`, `α`, `β`, `ᾱ`, `β̄`, `κ_i`, `D_j`.
//! - [`lyapunov_xi`], [`lyapunov_f`], [`lyapunov_h`]: pathwise descent slack.
//! - [`lyapunov_g`] with [`g_descent_ensemble`]: descent in expectation.
//! - [`fit_rates`]: sublinear and linear fits on ensemble-mean gaps.
//! - [`integrate_delayed_flow`]: the continuous-time analogue.

mod coefficients;
mod flow;
mod inequalities;
mod lyapunov;
mod rates;

pub use coefficients::{
    adaptive_coefficients, bounded_coefficients, bounded_linear_factor, coefficients, epsilon_bounded,
    epsilon_unbounded, stochastic_coefficients, stochastic_linear_factor, AdaptiveCoefficients,
    BoundedCoefficients, CoefficientSet, Coefficients, Regime, StochasticCoefficients,
};
pub use flow::{integrate_delayed_flow, DelayProfile, FlowResult};
pub use inequalities::{check_appendix_inequalities, AppendixReport, InequalityStat};
pub use lyapunov::{
    g_descent_ensemble, lyapunov_f, lyapunov_g, lyapunov_g_shifted, lyapunov_h, lyapunov_xi, EnsembleDescent, LyapunovKind,
    LyapunovReport, LyapunovSummary, SLACK_TOL,
};
pub use rates::{
    fit_rates, least_squares, linear_rate, log_spaced, loglog_slope, mean_gap, nonincreasing_at,
    running_best_sqrt_k, LineFit, RateFits, GAP_FLOOR,
};

use crate::solver::RunRecord;

/// `Q_T = {k : j(k) < T}`.
pub fn q_subsequence(run: &RunRecord, t: usize) -> Vec<usize> {
    run.rows.iter().filter(|r| r.j_max < t).map(|r| r.k).collect()
}

/// Relative growth of `Σ_{i<k} ‖Δ^i‖²` over the last decade `[K/10, K]`.
pub fn delta_sq_tail_increment(run: &RunRecord) -> f64 {
    let a = run.delta_sq();
    let total: f64 = a.iter().sum();
    let early: f64 = a[..a.len() / 10].iter().sum();
    if total == 0.0 {
        0.0
    } else {
        (total - early) / total
    }
}

/// Mean of the last `window` entries.
pub fn trailing_mean(values: &[f64], window: usize) -> f64 {
    let w = window.clamp(1, values.len().max(1));
    values[values.len().saturating_sub(w)..].iter().sum::<f64>() / w as f64
}
