//! Rate fits on ensemble-mean optimality gaps and the running-best series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::RunRecord;

/// Gaps below this are treated as float noise and cut off.
pub const GAP_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 3 {
        return Err(Error::InsufficientSamples(format!("{n} points for a line fit")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

/// Mean of `f(x^k) − min f` over the ensemble, `k = 0, …, K`.
pub fn mean_gap(ensemble: &[RunRecord], min_f: f64) -> Result<Vec<f64>> {
    let first = ensemble.first().ok_or(Error::EmptyTrace)?;
    let len = first.horizon() + 1;
    if ensemble.iter().any(|r| r.horizon() + 1 != len) {
        return Err(Error::Mismatch("ensemble runs have different horizons".into()));
    }
    let mut mean = vec![0.0; len];
    for r in ensemble {
        for (m, f) in mean.iter_mut().zip(r.f_series()) {
            *m += (f - min_f) / ensemble.len() as f64;
        }
    }
    Ok(mean)
}

/// Slope of `log gap` against `log k` for `k ∈ [k_lo, k_hi]`, stopping at
/// the first gap below [`GAP_FLOOR`].
pub fn loglog_slope(gap: &[f64], k_lo: usize, k_hi: usize) -> Result<LineFit> {
    let k_lo = k_lo.max(1);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, &g) in gap.iter().enumerate().take(k_hi + 1).skip(k_lo) {
        if g < GAP_FLOOR {
            break;
        }
        x.push((k as f64).ln());
        y.push(g.ln());
    }
    least_squares(&x, &y)
}

/// Geometric factor `ρ` in `gap_k ≈ C ρ^k`, fitted on the tail half of the
/// portion of the series above [`GAP_FLOOR`].
pub fn linear_rate(gap: &[f64]) -> Result<LineFit> {
    let end = gap.iter().position(|&g| !(g >= GAP_FLOOR)).unwrap_or(gap.len());
    let start = end / 2;
    let x: Vec<f64> = (start..end).map(|k| k as f64).collect();
    let y: Vec<f64> = gap[start..end].iter().map(|g| g.ln()).collect();
    let mut fit = least_squares(&x, &y)?;
    fit.slope = fit.slope.exp();
    Ok(fit)
}

/// `min_{i ≤ k} v_i · √k` for `k ≥ 1` (entry `k−1` of the output).
pub fn running_best_sqrt_k(values: &[f64]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &v)| {
            best = best.min(v);
            best * (k as f64).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFits {
    pub mean_gap: Vec<f64>,
    pub loglog: Option<LineFit>,
    /// `slope` holds the per-step factor.
    pub linear: Option<LineFit>,
    /// [`running_best_sqrt_k`] of the ensemble-mean `‖∇f(x^k)‖₂`.
    pub running_best: Vec<f64>,
}

/// Sublinear fit on the tail half `[K/2, K]`, linear fit, and running-best
/// series for an ensemble with known `min f`.
pub fn fit_rates(ensemble: &[RunRecord], min_f: f64) -> Result<RateFits> {
    let gap = mean_gap(ensemble, min_f)?;
    let k = gap.len() - 1;
    let loglog = loglog_slope(&gap, k / 2, k).ok();
    let linear = linear_rate(&gap).ok();
    let mut grad = vec![0.0; k];
    for r in ensemble {
        for (g, row) in grad.iter_mut().zip(&r.rows) {
            *g += row.grad_norm / ensemble.len() as f64;
        }
    }
    Ok(RateFits {
        mean_gap: gap,
        loglog,
        linear,
        running_best: running_best_sqrt_k(&grad),
    })
}

/// Whether `series` is nonincreasing at the sampled indices, with relative
/// slack `rel`.
pub fn nonincreasing_at(series: &[f64], indices: &[usize], rel: f64) -> bool {
    indices
        .windows(2)
        .all(|w| series[w[1]] <= series[w[0]] * (1.0 + rel))
}

/// About `count` log-spaced integers in `[lo, hi]`, deduplicated.
pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((lo.max(1) as f64).ln(), (hi.max(1) as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let gap: Vec<f64> = (0..1000).map(|k| 3.0 / (k as f64 + 1e-300).max(1.0)).collect();
        let fit = loglog_slope(&gap, 10, 999).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn exact_geometric_factor() {
        let gap: Vec<f64> = (0..400).map(|k| 2.0 * 0.9f64.powi(k)).collect();
        let fit = linear_rate(&gap).unwrap();
        assert!((fit.slope - 0.9).abs() < 1e-12);
        // floor cut: 0.9^k·2 < 1e-14 after k ≈ 312
        assert!(fit.points < 200);
    }

    #[test]
    fn running_best() {
        let s = running_best_sqrt_k(&[4.0, 1.0, 2.0, 0.5]);
        assert_eq!(s, vec![1.0, 2f64.sqrt(), 0.5 * 3f64.sqrt()]);
    }
}
