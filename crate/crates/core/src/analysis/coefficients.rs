//! The `ε` of each descent lemma and the constants built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ProblemInstance;
use crate::solver::{EpsilonSpec, EpsilonTable, StepPolicy};

/// Smaller root of `ε + 1/ε = B` with `B = 1 + (1/τ)(1/γ − ½)`.
pub fn epsilon_bounded(gamma: f64, tau: usize) -> Result<f64> {
    if tau == 0 || !(gamma > 0.0) {
        return Err(Error::InfeasibleStep(format!("need τ ≥ 1 and γ > 0, got τ = {tau}, γ = {gamma}")));
    }
    let b = 1.0 + (1.0 / gamma - 0.5) / tau as f64;
    let disc = b * b - 4.0;
    if disc < -1e-12 {
        return Err(Error::InfeasibleStep(format!(
            "γ = {gamma} exceeds 2/(2τ+1) for τ = {tau} (B = {b} < 2)"
        )));
    }
    // 2/(B + √(B²−4)) is the small root without cancellation
    let eps = 2.0 / (b + disc.max(0.0).sqrt());
    let resid = (eps + 1.0 / eps - b).abs();
    if resid > 1e-10 * b {
        return Err(Error::InfeasibleStep(format!("ε residual {resid:e}")));
    }
    Ok(eps)
}

/// Smaller root of `½(ε + c₀/ε) = 1/γ − ½`.
pub fn epsilon_unbounded(gamma: f64, c0: f64) -> Result<f64> {
    if !(gamma > 0.0 && c0 > 0.0) {
        return Err(Error::InfeasibleStep(format!("need γ > 0 and c₀ > 0, got γ = {gamma}, c₀ = {c0}")));
    }
    let r = 1.0 / gamma - 0.5;
    let disc = r * r - c0;
    if disc < -1e-12 * c0 || r <= 0.0 {
        return Err(Error::InfeasibleStep(format!(
            "γ = {gamma} exceeds 2/(2√c₀+1) for c₀ = {c0} (1/γ − ½ = {r} < √c₀)"
        )));
    }
    let eps = c0 / (r + disc.max(0.0).sqrt());
    let resid = (0.5 * (eps + c0 / eps) - r).abs();
    if resid > 1e-10 * r {
        return Err(Error::InfeasibleStep(format!("ε residual {resid:e}")));
    }
    Ok(eps)
}

/// Which descent lemma the constants belong to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    Bounded { tau: usize },
    StochasticUnbounded { c0: f64 },
    DelayAdaptive { epsilon: EpsilonSpec },
}

impl Regime {
    /// The regime implied by a regime step policy; `Fixed` has none.
    pub fn of_policy(policy: &StepPolicy) -> Option<Self> {
        match *policy {
            StepPolicy::BoundedFixed { tau, .. } => Some(Regime::Bounded { tau }),
            StepPolicy::StochasticUnboundedFixed { c0, .. } => Some(Regime::StochasticUnbounded { c0 }),
            StepPolicy::DelayAdaptive { epsilon, .. } => Some(Regime::DelayAdaptive { epsilon }),
            StepPolicy::Fixed { .. } => None,
        }
    }
}

/// Constants of the bounded-delay analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedCoefficients {
    pub tau: usize,
    pub gamma: f64,
    pub epsilon: f64,
    /// `½(1/γ − ½ − τ)L`, the per-step decrease of `ξ`.
    pub xi_descent: f64,
    /// `(L/4τ)(1/γ − ½ − τ)`, the per-step decrease of `F`.
    pub f_descent: f64,
    pub delta: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Constants of the stochastic-unbounded analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticCoefficients {
    pub c0: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// `(L/c₀)(1/γ − ½ − √c₀)`, the expected decrease of `G` per unit `R(k)`.
    pub g_descent: f64,
    pub delta_bar: f64,
    pub beta_bar: f64,
    pub alpha_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveCoefficients {
    pub epsilon: EpsilonSpec,
    pub c: f64,
    /// `κ_1, …, κ_len` (index 0 unused).
    pub kappa: Vec<f64>,
    /// `D_0, …, D_len`.
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum CoefficientSet {
    Bounded(BoundedCoefficients),
    StochasticUnbounded(StochasticCoefficients),
    DelayAdaptive(AdaptiveCoefficients),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub set: CoefficientSet,
    /// Boundary cases that are legal but make a constant vanish or blow up.
    pub flags: Vec<String>,
}

pub fn bounded_coefficients(n: usize, l: f64, gamma: f64, tau: usize) -> Result<Coefficients> {
    let epsilon = epsilon_bounded(gamma, tau)?;
    let t = tau as f64;
    let n = n as f64;
    let margin = 1.0 / gamma - 0.5 - t;
    let delta = (1.0 + epsilon / (2.0 * t) * margin) * l / (2.0 * epsilon);
    let beta = (8.0 * n * l * l / (gamma * gamma)).max((12.0 * n + 2.0) * l * l * t + delta * t);
    let f_descent = l / (4.0 * t) * margin;
    let alpha = beta / f_descent;
    let mut flags = Vec::new();
    if margin <= 1e-12 {
        flags.push(format!("1/γ − ½ − τ = {margin:e}: descent constant vanishes, α diverges"));
    }
    Ok(Coefficients {
        set: CoefficientSet::Bounded(BoundedCoefficients {
            tau,
            gamma,
            epsilon,
            xi_descent: 0.5 * margin * l,
            f_descent,
            delta,
            beta,
            alpha,
        }),
        flags,
    })
}

pub fn stochastic_coefficients(n: usize, l: f64, gamma: f64, c0: f64) -> Result<Coefficients> {
    let epsilon = epsilon_unbounded(gamma, c0)?;
    let n = n as f64;
    let margin = 1.0 / gamma - 0.5 - c0.sqrt();
    let delta_bar = l / (2.0 * epsilon) + (1.0 / gamma - 0.5) * l / c0 - l / c0.sqrt();
    let beta_bar = (8.0 * n * l * l / (gamma * gamma * c0)).max((12.0 * n + 2.0) * l * l + delta_bar);
    let alpha_bar = beta_bar / (0.5 * l * margin);
    let mut flags = Vec::new();
    if delta_bar <= 0.0 {
        flags.push(format!("δ̄ = {delta_bar:e} is not positive"));
    }
    if margin <= 1e-12 {
        flags.push(format!("1/γ − ½ − √c₀ = {margin:e}: descent constant vanishes"));
    }
    Ok(Coefficients {
        set: CoefficientSet::StochasticUnbounded(StochasticCoefficients {
            c0,
            gamma,
            epsilon,
            g_descent: l / c0 * margin,
            delta_bar,
            beta_bar,
            alpha_bar,
        }),
        flags,
    })
}

pub fn adaptive_coefficients(epsilon: EpsilonSpec, c: f64, len: usize) -> Result<Coefficients> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InfeasibleStep(format!("c must lie in (0, 1), got {c}")));
    }
    let t = EpsilonTable::new(epsilon, len)?;
    Ok(Coefficients {
        set: CoefficientSet::DelayAdaptive(AdaptiveCoefficients {
            epsilon,
            c,
            kappa: t.kappa[..=len].to_vec(),
            d: t.d,
        }),
        flags: Vec::new(),
    })
}

/// Constants for a step `γ` (or the adaptive policy) in the given regime.
pub fn coefficients(problem: &ProblemInstance, policy: &StepPolicy, regime: &Regime) -> Result<Coefficients> {
    let n = problem.num_blocks();
    let l = problem.lipschitz();
    match (*regime, *policy) {
        (Regime::DelayAdaptive { epsilon }, StepPolicy::DelayAdaptive { epsilon: e2, c }) => {
            if epsilon != e2 {
                return Err(Error::Mismatch("ε-sequence differs between policy and regime".into()));
            }
            adaptive_coefficients(epsilon, c, 64)
        }
        (Regime::DelayAdaptive { .. }, _) | (_, StepPolicy::DelayAdaptive { .. }) => Err(Error::Mismatch(
            "delay-adaptive steps pair only with the delay-adaptive regime".into(),
        )),
        (Regime::Bounded { tau }, p) => {
            let gamma = p.fixed_gamma().ok_or_else(|| Error::InfeasibleStep("invalid step".into()))?;
            bounded_coefficients(n, l, gamma, tau)
        }
        (Regime::StochasticUnbounded { c0 }, p) => {
            let gamma = p.fixed_gamma().ok_or_else(|| Error::InfeasibleStep("invalid step".into()))?;
            stochastic_coefficients(n, l, gamma, c0)
        }
    }
}

/// Per-step contraction factor of the linear rate in the bounded regime,
/// `(α/min(ν,1)) / (1 + α/min(ν,1))`.
pub fn bounded_linear_factor(alpha: f64, nu: f64) -> f64 {
    let a = alpha / nu.min(1.0);
    a / (1.0 + a)
}

/// Per-step contraction factor in the stochastic-unbounded regime,
/// `ᾱ max(1, 1/ν) / (1 + ᾱ max(1, 1/ν))`.
pub fn stochastic_linear_factor(alpha_bar: f64, nu: f64) -> f64 {
    let a = alpha_bar * (1.0f64).max(1.0 / nu);
    a / (1.0 + a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_examples() {
        let e = epsilon_bounded(0.4, 1).unwrap();
        assert!((e - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
        let e = epsilon_bounded(2.0 / 3.0, 1).unwrap();
        assert!((e - 1.0).abs() < 1e-6);
        let e = epsilon_bounded(0.2, 2).unwrap();
        assert!((e + 1.0 / e - 3.25).abs() < 1e-12);
        assert!(epsilon_bounded(0.7, 1).is_err());

        let e = epsilon_unbounded(0.2, 4.0).unwrap();
        assert!((e - (9.0 - 65f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(epsilon_unbounded(0.5, 4.0).is_err());
        let e = epsilon_unbounded(2.0 / 3.0 * (1.0 - 1e-12), 1.0).unwrap();
        assert!((e - 1.0).abs() < 1e-5);
    }

    #[test]
    fn g_descent_constant() {
        let c = stochastic_coefficients(2, 1.0, 0.2, 4.0).unwrap();
        let CoefficientSet::StochasticUnbounded(s) = c.set else { unreachable!() };
        assert!((s.g_descent - 0.625).abs() < 1e-15);
        assert!(s.delta_bar > 0.0);
    }

    #[test]
    fn boundary_is_flagged() {
        let c = bounded_coefficients(2, 1.0, 2.0 / 3.0, 1).unwrap();
        assert!(!c.flags.is_empty());
    }
}
