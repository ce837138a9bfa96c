//! Delay laws and the tail moments `s_l`, `c_i` that drive the
//! stochastic-unbounded step size.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tail tolerance used when truncating infinite sums.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Hard cap on the number of summed terms before a tail is declared divergent.
pub const MAX_TAIL_TERMS: usize = 5_000_000;

/// A probability law over delays `j ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailLaw {
    /// `p_j = (1 − q) q^j`.
    Geometric { q: f64 },
    /// `p_j ∝ (j + 1)^{−exponent}`.
    PowerLaw { exponent: f64 },
    /// Finite support `p_0, …, p_{J}`.
    Explicit { p: Vec<f64> },
}

/// Hurwitz-style sum `Σ_{n ≥ 1} n^{−t}` for `t > 1`: direct sum of the first
/// terms plus an Euler–Maclaurin tail.
pub(crate) fn zeta(t: f64) -> f64 {
    const M: usize = 10_000;
    let head: f64 = (1..M).rev().map(|n| (n as f64).powf(-t)).sum();
    head + power_tail(t, M as f64)
}

/// `Σ_{n ≥ m} n^{−t}` by Euler–Maclaurin, accurate to `O(m^{−t−3})`.
pub(crate) fn power_tail(t: f64, m: f64) -> f64 {
    m.powf(1.0 - t) / (t - 1.0) + 0.5 * m.powf(-t) + t * m.powf(-t - 1.0) / 12.0
        - t * (t + 1.0) * (t + 2.0) * m.powf(-t - 3.0) / 720.0
}

impl TailLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            TailLaw::Geometric { q } if !(0.0..1.0).contains(q) => {
                Err(Error::InvalidArgument(format!("geometric q must lie in [0, 1), got {q}")))
            }
            TailLaw::PowerLaw { exponent } if !(*exponent > 1.0 && exponent.is_finite()) => Err(
                Error::InvalidArgument(format!("power-law exponent must exceed 1, got {exponent}")),
            ),
            TailLaw::Explicit { p } => {
                if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidArgument("p must be nonempty and nonnegative".into()));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("p sums to {total}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `p_j`. Assumes the law is valid.
    pub fn pmf(&self, j: usize) -> f64 {
        match self {
            TailLaw::Geometric { q } => (1.0 - q) * q.powi(j as i32),
            TailLaw::PowerLaw { exponent } => ((j + 1) as f64).powf(-exponent) / zeta(*exponent),
            TailLaw::Explicit { p } => p.get(j).copied().unwrap_or(0.0),
        }
    }

    /// `p_0, …, p_{n−1}`.
    pub fn pmf_table(&self, n: usize) -> Vec<f64> {
        match self {
            TailLaw::PowerLaw { exponent } => {
                let z = zeta(*exponent);
                (0..n).map(|j| ((j + 1) as f64).powf(-exponent) / z).collect()
            }
            _ => (0..n).map(|j| self.pmf(j)).collect(),
        }
    }

    /// `Σ_{j ≥ n} p_j`.
    pub fn survival(&self, n: usize) -> f64 {
        match self {
            TailLaw::Geometric { q } => q.powi(n as i32),
            TailLaw::PowerLaw { exponent } => power_tail(*exponent, (n + 1) as f64) / zeta(*exponent),
            TailLaw::Explicit { p } => p.iter().skip(n).sum(),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            TailLaw::Geometric { q } => Some(q / (1.0 - q)),
            TailLaw::PowerLaw { exponent } if *exponent > 2.0 => {
                // E[j] = E[(j+1)] − 1 = ζ(t−1)/ζ(t) − 1
                Some(zeta(exponent - 1.0) / zeta(*exponent) - 1.0)
            }
            TailLaw::PowerLaw { .. } => None,
            TailLaw::Explicit { p } => Some(p.iter().enumerate().map(|(j, v)| j as f64 * v).sum()),
        }
    }
}

/// `s_l = Σ_{j ≥ l} j p_j` and `c_i = Σ_{l ≥ i} s_l`, truncated at `J` terms.
///
/// Both sequences are zero beyond `J` up to the truncation tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMoments {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub c0: f64,
}

impl TailMoments {
    pub fn truncation(&self) -> usize {
        self.s.len()
    }

    /// `c_i`, taken as zero past the truncation point.
    pub fn c_at(&self, i: usize) -> f64 {
        self.c.get(i).copied().unwrap_or(0.0)
    }

    pub fn s_at(&self, l: usize) -> f64 {
        self.s.get(l).copied().unwrap_or(0.0)
    }
}

/// Computes the tail moments of `law`.
///
/// Uses `c₀ = Σ_j j(j+1) p_j`, which follows from exchanging the order of
/// the double sum, so `c₀` is finite exactly when the law has a finite
/// second moment. Summation stops once both the remaining probability mass
/// and an upper bound on the remaining `c₀` contribution fall below `tol`
/// (relative). A law whose partial sums are still growing after
/// [`MAX_TAIL_TERMS`] terms is reported as [`Error::DivergentTail`].
pub fn tail_moments(law: &TailLaw, tol: f64) -> Result<TailMoments> {
    law.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let z = match law {
        TailLaw::PowerLaw { exponent } => zeta(*exponent),
        _ => 1.0,
    };
    let pmf = |j: usize| match law {
        TailLaw::PowerLaw { exponent } => ((j + 1) as f64).powf(-exponent) / z,
        _ => law.pmf(j),
    };
    let mut terms = Vec::new();
    let mut partial = 0.0f64;
    let mut mass = 0.0f64;
    let mut converged = false;
    match law {
        TailLaw::Explicit { p } => {
            terms.extend(p.iter().enumerate().map(|(j, v)| j as f64 * v));
            partial = terms.iter().enumerate().map(|(j, w)| (j + 1) as f64 * w).sum();
            converged = true;
        }
        _ => {
            for j in 0..MAX_TAIL_TERMS {
                let pj = pmf(j);
                let w = j as f64 * pj;
                terms.push(w);
                partial += (j + 1) as f64 * w;
                mass += pj;
                // Upper bound on Σ_{m > j} m(m+1) p_m.
                let remaining = match law {
                    TailLaw::Geometric { q } => {
                        let m = (j + 1) as f64;
                        let ratio = q * (m + 2.0) / m;
                        if ratio < 1.0 {
                            m * (m + 1.0) * pmf(j + 1) / (1.0 - ratio)
                        } else {
                            f64::INFINITY
                        }
                    }
                    // m(m+1) p_m ≤ (m+1)^{2−t}/ζ(t)
                    TailLaw::PowerLaw { exponent } if *exponent > 3.0 => {
                        power_tail(exponent - 2.0, (j + 2) as f64) / z
                    }
                    _ => f64::INFINITY,
                };
                if 1.0 - mass < tol && remaining <= tol * partial.max(f64::MIN_POSITIVE) {
                    converged = true;
                    break;
                }
            }
        }
    }
    if !converged {
        return Err(Error::DivergentTail {
            partial,
            terms: terms.len(),
        });
    }
    let n = terms.len();
    let mut s = vec![0.0; n];
    let mut acc = 0.0;
    for l in (0..n).rev() {
        acc += terms[l];
        s[l] = acc;
    }
    let mut c = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += s[i];
        c[i] = acc;
    }
    let c0 = c.first().copied().unwrap_or(0.0);
    Ok(TailMoments { s, c, c0 })
}

/// Within-bound law for [`DelaySpec::Bounded`] injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundedLaw {
    /// Uniform on `{0, …, τ}`.
    #[default]
    Uniform,
    /// Always the worst case `τ`.
    Max,
}

/// The three delay classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelaySpec {
    Bounded {
        tau: usize,
        #[serde(default)]
        law: BoundedLaw,
    },
    StochasticTail {
        law: TailLaw,
        /// Largest delay that can be sampled; defaults to the truncation
        /// point of [`tail_moments`].
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<usize>,
    },
    /// `j(k) = j_of_k[k mod len]`.
    DeterministicSequence { j_of_k: Vec<usize> },
}

impl DelaySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DelaySpec::Bounded { .. } => Ok(()),
            DelaySpec::StochasticTail { law, truncation } => {
                tail_moments(law, DEFAULT_TAIL_TOL)?;
                if let Some(j) = truncation {
                    let lost = law.survival(j + 1);
                    if lost > 1e-12 {
                        return Err(Error::InvalidArgument(format!(
                            "truncation at {j} drops probability mass {lost:e} > 1e-12"
                        )));
                    }
                }
                Ok(())
            }
            DelaySpec::DeterministicSequence { j_of_k } if j_of_k.is_empty() => {
                Err(Error::InvalidArgument("deterministic delay sequence is empty".into()))
            }
            DelaySpec::DeterministicSequence { .. } => Ok(()),
        }
    }

    /// Builds a sampler for `j(k)`.
    pub fn sampler(&self) -> Result<DelaySampler> {
        self.validate()?;
        Ok(match self {
            DelaySpec::Bounded { tau, law } => DelaySampler::Bounded { tau: *tau, law: *law },
            DelaySpec::StochasticTail { law, truncation } => {
                let j_max = match truncation {
                    Some(j) => *j,
                    None => tail_moments(law, DEFAULT_TAIL_TOL)?.truncation().max(1),
                };
                let weights = law.pmf_table(j_max + 1);
                let index = WeightedIndex::new(&weights)
                    .map_err(|e| Error::InvalidArgument(format!("delay weights: {e}")))?;
                DelaySampler::Table(index)
            }
            DelaySpec::DeterministicSequence { j_of_k } => DelaySampler::Sequence(j_of_k.clone()),
        })
    }
}

/// Draws `j(k)` for successive `k`.
#[derive(Debug, Clone)]
pub enum DelaySampler {
    Bounded { tau: usize, law: BoundedLaw },
    Table(WeightedIndex<f64>),
    Sequence(Vec<usize>),
}

impl DelaySampler {
    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        match self {
            DelaySampler::Bounded { tau, law: BoundedLaw::Uniform } => rng.random_range(0..=*tau),
            DelaySampler::Bounded { tau, law: BoundedLaw::Max } => *tau,
            DelaySampler::Table(index) => index.sample(rng),
            DelaySampler::Sequence(seq) => seq[k % seq.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_half_closed_form() {
        let m = tail_moments(&TailLaw::Geometric { q: 0.5 }, 1e-12).unwrap();
        for l in 0..40 {
            let want = (l as f64 + 1.0) * 0.5f64.powi(l as i32);
            assert!((m.s_at(l) - want).abs() < 1e-12, "s_{l}");
        }
        assert!((m.c0 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn point_mass_has_no_tail() {
        let m = tail_moments(&TailLaw::Explicit { p: vec![1.0] }, 1e-12).unwrap();
        assert_eq!(m.c0, 0.0);
        assert!(m.s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_square_diverges() {
        assert!(matches!(
            tail_moments(&TailLaw::PowerLaw { exponent: 2.0 }, 1e-12),
            Err(Error::DivergentTail { .. })
        ));
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((zeta(4.0) - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-13);
    }

    #[test]
    fn power_law_five_is_finite() {
        let law = TailLaw::PowerLaw { exponent: 5.0 };
        let m = tail_moments(&law, 1e-12).unwrap();
        // c0 = E[j(j+1)] = Σ_n (n−1)n n^{−5}/ζ(5) = (ζ(3) − ζ(4))/ζ(5)
        let want = (zeta(3.0) - zeta(4.0)) / zeta(5.0);
        assert!((m.c0 - want).abs() < 1e-8 * want, "{} vs {want}", m.c0);
    }

    #[test]
    fn explicit_law_must_sum_to_one() {
        assert!(TailLaw::Explicit { p: vec![0.5, 0.4] }.validate().is_err());
        assert!(TailLaw::Geometric { q: 1.0 }.validate().is_err());
    }
}
