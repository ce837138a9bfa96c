//! Step-size policies and the sequences `ε_i`, `κ_i`, `D_j` behind the
//! delay-adaptive step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::power_tail;

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InfeasibleStep(format!("c must lie in (0, 1), got {c}")));
    }
    Ok(())
}

/// `γ = 2c/(2τ+1)`, the bounded-delay step.
pub fn gamma_bounded(tau: usize, c: f64) -> Result<f64> {
    check_c(c)?;
    if tau < 1 {
        return Err(Error::InfeasibleStep("τ must be at least 1".into()));
    }
    Ok(2.0 * c / (2.0 * tau as f64 + 1.0))
}

/// `γ = 2c/(2√c₀+1)`, the stochastic-unbounded step.
pub fn gamma_stochastic_unbounded(c0: f64, c: f64) -> Result<f64> {
    check_c(c)?;
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InfeasibleStep(format!("c₀ must be positive, got {c0}")));
    }
    Ok(2.0 * c / (2.0 * c0.sqrt() + 1.0))
}

/// The summable positive sequence `ε_1, ε_2, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSpec {
    /// `ε_i = scale · i^{−exponent}`.
    PowerLaw {
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `ε_i = scale · ratio^i`.
    Geometric {
        ratio: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        EpsilonSpec::PowerLaw {
            exponent: 2.0,
            scale: 1.0,
        }
    }
}

impl EpsilonSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSpec::PowerLaw { exponent, scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidArgument("ε scale must be positive".into()));
                }
                if !(exponent > 1.0 && exponent.is_finite()) {
                    return Err(Error::DivergentTail {
                        partial: f64::INFINITY,
                        terms: 0,
                    });
                }
            }
            EpsilonSpec::Geometric { ratio, scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidArgument("ε scale must be positive".into()));
                }
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(Error::DivergentTail {
                        partial: f64::INFINITY,
                        terms: 0,
                    });
                }
            }
        }
        Ok(())
    }

    /// `ε_i` for `i ≥ 1`.
    pub fn eps(&self, i: usize) -> f64 {
        match *self {
            EpsilonSpec::PowerLaw { exponent, scale } => scale * (i as f64).powf(-exponent),
            EpsilonSpec::Geometric { ratio, scale } => scale * ratio.powi(i as i32),
        }
    }

    /// `κ_i = Σ_{j ≥ i} ε_j`, summed directly up to a cutoff and completed by
    /// an Euler–Maclaurin tail for the power law.
    pub fn kappa(&self, i: usize) -> f64 {
        match *self {
            EpsilonSpec::Geometric { ratio, scale } => scale * ratio.powi(i as i32) / (1.0 - ratio),
            EpsilonSpec::PowerLaw { exponent, scale } => {
                let cut = i.max(1).max(10_000);
                let head: f64 = (i.max(1)..cut).rev().map(|n| (n as f64).powf(-exponent)).sum();
                scale * (head + power_tail(exponent, cut as f64))
            }
        }
    }
}

/// `ε_i`, `κ_i` and `D_j` tabulated for `i, j ≤ len`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonTable {
    pub spec: EpsilonSpec,
    /// `eps[i]` for `i ≥ 1`; `eps[0]` is unused and zero.
    pub eps: Vec<f64>,
    /// `kappa[i]` for `1 ≤ i ≤ len + 1`; `kappa[0]` is unused.
    pub kappa: Vec<f64>,
    /// `d[j]` for `0 ≤ j ≤ len`.
    pub d: Vec<f64>,
}

impl EpsilonTable {
    pub fn new(spec: EpsilonSpec, len: usize) -> Result<Self> {
        spec.validate()?;
        let mut eps = vec![0.0; len + 2];
        for (i, e) in eps.iter_mut().enumerate().skip(1) {
            *e = spec.eps(i);
        }
        let mut kappa = vec![0.0; len + 2];
        kappa[len + 1] = spec.kappa(len + 1);
        for i in (1..=len).rev() {
            kappa[i] = eps[i] + kappa[i + 1];
        }
        let mut d = Vec::with_capacity(len + 1);
        let mut acc = 0.5 + 0.5 * kappa[1];
        d.push(acc);
        for e in eps.iter().take(len + 1).skip(1) {
            acc += 0.5 / e;
            d.push(acc);
        }
        eps.truncate(len + 1);
        Ok(Self { spec, eps, kappa, d })
    }

    pub fn len(&self) -> usize {
        self.d.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `κ_i`, with the untabulated tail computed on demand.
    pub fn kappa_at(&self, i: usize) -> f64 {
        self.kappa.get(i).copied().unwrap_or_else(|| self.spec.kappa(i))
    }
}

/// `D_j = ½ + κ₁/2 + Σ_{i=1}^{j} 1/(2ε_i)`.
pub fn d_sequence(spec: &EpsilonSpec, j: usize) -> Result<f64> {
    spec.validate()?;
    let head: f64 = (1..=j).map(|i| 0.5 / spec.eps(i)).sum();
    Ok(0.5 + 0.5 * spec.kappa(1) + head)
}

/// How `γ_k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepPolicy {
    /// `γ = 2c/(2τ+1)`.
    BoundedFixed { tau: usize, c: f64 },
    /// `γ = 2c/(2√c₀+1)`.
    StochasticUnboundedFixed { c0: f64, c: f64 },
    /// `γ_k = c/D_{j(k)}`.
    DelayAdaptive {
        #[serde(default)]
        epsilon: EpsilonSpec,
        c: f64,
    },
    /// A constant `γ` with no regime guarantee, for control runs.
    Fixed { gamma: f64 },
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepPolicy::BoundedFixed { tau, c } => gamma_bounded(tau, c).map(drop),
            StepPolicy::StochasticUnboundedFixed { c0, c } => gamma_stochastic_unbounded(c0, c).map(drop),
            StepPolicy::DelayAdaptive { epsilon, c } => {
                check_c(c)?;
                epsilon.validate()
            }
            StepPolicy::Fixed { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InfeasibleStep(format!("γ must be positive, got {gamma}")))
            }
            StepPolicy::Fixed { .. } => Ok(()),
        }
    }

    /// The constant `γ` of the fixed policies.
    pub fn fixed_gamma(&self) -> Option<f64> {
        match *self {
            StepPolicy::BoundedFixed { tau, c } => gamma_bounded(tau, c).ok(),
            StepPolicy::StochasticUnboundedFixed { c0, c } => gamma_stochastic_unbounded(c0, c).ok(),
            StepPolicy::Fixed { gamma } => Some(gamma),
            StepPolicy::DelayAdaptive { .. } => None,
        }
    }

    /// Prepares `γ_k` lookups for delays up to `max_delay`.
    pub fn schedule(&self, max_delay: usize) -> Result<StepSchedule> {
        self.validate()?;
        Ok(match *self {
            StepPolicy::DelayAdaptive { epsilon, c } => StepSchedule::Adaptive {
                c,
                table: EpsilonTable::new(epsilon, max_delay.max(1))?,
            },
            _ => StepSchedule::Constant(self.fixed_gamma().expect("fixed policy")),
        })
    }
}

#[derive(Debug, Clone)]
pub enum StepSchedule {
    Constant(f64),
    Adaptive { c: f64, table: EpsilonTable },
}

impl StepSchedule {
    pub fn gamma(&mut self, j: usize) -> f64 {
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::Adaptive { c, table } => {
                if j > table.len() {
                    *table = EpsilonTable::new(table.spec, (2 * j).max(16)).expect("validated spec");
                }
                *c / table.d[j]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_formulas() {
        assert!((gamma_bounded(2, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!((gamma_bounded(1, 0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!((gamma_bounded(10, 0.99).unwrap() - 1.98 / 21.0).abs() < 1e-15);
        assert!(gamma_bounded(0, 0.5).is_err());
        assert!(gamma_bounded(1, 1.0).is_err());
        assert!((gamma_stochastic_unbounded(4.0, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!((gamma_stochastic_unbounded(1.0, 0.9).unwrap() - 0.6).abs() < 1e-15);
        assert!(gamma_stochastic_unbounded(0.0, 0.5).is_err());
    }

    #[test]
    fn dyadic_d_sequence() {
        let spec = EpsilonSpec::Geometric { ratio: 0.5, scale: 1.0 };
        for j in 0..10 {
            assert!((d_sequence(&spec, j).unwrap() - 2f64.powi(j as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_square_d_sequence() {
        let spec = EpsilonSpec::default();
        let k1 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((spec.kappa(1) - k1).abs() < 1e-12);
        assert!((d_sequence(&spec, 0).unwrap() - (0.5 + k1 / 2.0)).abs() < 1e-12);
        assert!((d_sequence(&spec, 2).unwrap() - (0.5 + k1 / 2.0 + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn table_matches_direct_formula() {
        let spec = EpsilonSpec::default();
        let t = EpsilonTable::new(spec, 60).unwrap();
        for j in 0..=60 {
            assert!((t.d[j] - d_sequence(&spec, j).unwrap()).abs() < 1e-10 * t.d[j]);
        }
        for i in 1..=61 {
            assert!((t.kappa[i] - spec.kappa(i)).abs() < 1e-12);
        }
        assert!(t.d.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn divergent_epsilon_rejected() {
        let spec = EpsilonSpec::PowerLaw { exponent: 1.0, scale: 1.0 };
        assert!(matches!(d_sequence(&spec, 3), Err(Error::DivergentTail { .. })));
    }
}
