//! The four Lyapunov functions and the slack of their descent inequalities.
//!
//! Conventions: `a_i = ‖Δ^i‖₂²` with `a_i = 0` for `i < 0`, and every sum over
//! the infinite past stops at the start of the run, which is exact.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{AdaptiveCoefficients, BoundedCoefficients, StochasticCoefficients};
use crate::error::{Error, Result};
use crate::schedule::TailMoments;
use crate::solver::{EpsilonTable, RunRecord};

/// Relative slack tolerance for the pathwise checks.
pub const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovKind {
    Xi,
    F,
    G,
    H,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub kind: LyapunovKind,
    /// Values at `k = 0, …, K`.
    pub series: Vec<f64>,
    /// `(V_k − V_{k+1}) − bound_k` for `k = 0, …, K−1`.
    pub slack: Vec<f64>,
    pub min_slack: f64,
    /// `min_k slack_k / (1 + |V_k|)`.
    pub min_scaled_slack: f64,
    /// `S(k+1, τ+1) = Σ_{i=k−τ}^{k} a_i` for the `F` check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_k: Option<Vec<f64>>,
    /// `R(k) = Σ_{i=0}^{k} c_{k−i} a_i` for the `G` check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_k: Option<Vec<f64>>,
    /// Whether `slack_k ≥ −SLACK_TOL·(1 + |V_k|)` at every `k`. Meaningful for
    /// the pathwise lemmas; `G` is an expectation statement (see
    /// [`g_descent_ensemble`]).
    pub pathwise_pass: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub kind: LyapunovKind,
    pub min_slack: f64,
    pub min_scaled_slack: f64,
    pub pathwise_pass: bool,
}

impl LyapunovReport {
    fn build(
        kind: LyapunovKind,
        series: Vec<f64>,
        slack: Vec<f64>,
        s_k: Option<Vec<f64>>,
        r_k: Option<Vec<f64>>,
        warnings: Vec<String>,
    ) -> Self {
        let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
        let min_scaled_slack = slack
            .iter()
            .zip(&series)
            .map(|(s, v)| s / (1.0 + v.abs()))
            .fold(f64::INFINITY, f64::min);
        Self {
            kind,
            pathwise_pass: min_scaled_slack >= -SLACK_TOL,
            series,
            slack,
            min_slack,
            min_scaled_slack,
            s_k,
            r_k,
            warnings,
        }
    }

    pub fn summary(&self) -> LyapunovSummary {
        LyapunovSummary {
            kind: self.kind,
            min_slack: self.min_slack,
            min_scaled_slack: self.min_scaled_slack,
            pathwise_pass: self.pathwise_pass,
        }
    }

    /// CSV `k,lyap,slack,S_k,R_k`; absent columns are left empty and the
    /// final row (`k = K`) has no slack.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "lyap", "slack", "S_k", "R_k"])?;
        let opt = |v: Option<&Vec<f64>>, k: usize| v.and_then(|s| s.get(k)).map(f64::to_string).unwrap_or_default();
        for (k, v) in self.series.iter().enumerate() {
            w.write_record([
                k.to_string(),
                v.to_string(),
                self.slack.get(k).map(f64::to_string).unwrap_or_default(),
                opt(self.s_k.as_ref(), k),
                opt(self.r_k.as_ref(), k),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn constant_gamma(run: &RunRecord) -> Result<f64> {
    let g = run.rows.first().map(|r| r.gamma).ok_or(Error::EmptyTrace)?;
    if run.rows.iter().any(|r| r.gamma != g) {
        return Err(Error::Mismatch("this Lyapunov function needs a constant step".into()));
    }
    Ok(g)
}

fn delay_warnings(run: &RunRecord, tau: usize) -> Vec<String> {
    let max = run.rows.iter().map(|r| r.j_max).max().unwrap_or(0);
    if max > tau {
        vec![format!("observed delay {max} exceeds the assumed bound τ = {tau}")]
    } else {
        Vec::new()
    }
}

/// `Σ_{i=k−τ}^{k−1} (i − (k−τ) + 1) a_i`.
fn weighted_window(a: &[f64], k: usize, tau: usize) -> f64 {
    (1..=tau)
        .filter_map(|w| {
            // weight w sits at i = k − τ − 1 + w
            let i = (k + w).checked_sub(tau + 1)?;
            (i < k).then(|| w as f64 * a[i])
        })
        .sum()
}

fn windowed(run: &RunRecord, tau: usize, weight: f64) -> Vec<f64> {
    let a = run.delta_sq();
    run.f_series()
        .into_iter()
        .enumerate()
        .map(|(k, f)| f + weight * weighted_window(&a, k, tau))
        .collect()
}

/// `ξ_k = f(x^k) + (L/2ε) Σ_{i=k−τ}^{k−1} (i−(k−τ)+1) a_i`, checked against
/// `ξ_k − ξ_{k+1} ≥ ½(1/γ − ½ − τ) L a_k`.
pub fn lyapunov_xi(run: &RunRecord, tau: usize, epsilon: f64) -> Result<LyapunovReport> {
    let gamma = constant_gamma(run)?;
    let l = run.meta.lipschitz;
    let series = windowed(run, tau, l / (2.0 * epsilon));
    let descent = 0.5 * (1.0 / gamma - 0.5 - tau as f64) * l;
    let a = run.delta_sq();
    let slack = (0..a.len())
        .map(|k| series[k] - series[k + 1] - descent * a[k])
        .collect();
    Ok(LyapunovReport::build(
        LyapunovKind::Xi,
        series,
        slack,
        None,
        None,
        delay_warnings(run, tau),
    ))
}

/// `F_k` (the `ξ` form with weight `δ`), checked against
/// `F_k − F_{k+1} ≥ (L/4τ)(1/γ − ½ − τ)·S(k+1, τ+1)`.
pub fn lyapunov_f(run: &RunRecord, coef: &BoundedCoefficients) -> Result<LyapunovReport> {
    let gamma = constant_gamma(run)?;
    if (gamma - coef.gamma).abs() > 1e-15 * gamma {
        return Err(Error::Mismatch(format!("run used γ = {gamma}, coefficients assume {}", coef.gamma)));
    }
    let tau = coef.tau;
    let series = windowed(run, tau, coef.delta);
    let a = run.delta_sq();
    let s: Vec<f64> = (0..a.len())
        .map(|k| a[k.saturating_sub(tau)..=k].iter().sum())
        .collect();
    let slack = (0..a.len())
        .map(|k| series[k] - series[k + 1] - coef.f_descent * s[k])
        .collect();
    Ok(LyapunovReport::build(
        LyapunovKind::F,
        series,
        slack,
        Some(s),
        None,
        delay_warnings(run, tau),
    ))
}

/// `G_k = f(x^k) + δ̄ Σ_{i=0}^{k−1} c_{k−1−i} a_i` along one path, together
/// with `R(k)` and the per-path slack `(G_k − G_{k+1}) − (L/c₀)(1/γ−½−√c₀) R(k)`.
///
/// The lemma bounds the expectation only; combine paths with
/// [`g_descent_ensemble`].
pub fn lyapunov_g(run: &RunRecord, tail: &TailMoments, coef: &StochasticCoefficients) -> Result<LyapunovReport> {
    let gamma = constant_gamma(run)?;
    if (gamma - coef.gamma).abs() > 1e-15 * gamma {
        return Err(Error::Mismatch(format!("run used γ = {gamma}, coefficients assume {}", coef.gamma)));
    }
    if (tail.c0 - coef.c0).abs() > 1e-9 * coef.c0.max(1.0) {
        return Err(Error::Mismatch(format!("tail c₀ = {}, coefficients assume {}", tail.c0, coef.c0)));
    }
    let a = run.delta_sq();
    let support = tail.c.len();
    // r[k] = R(k)
    let r: Vec<f64> = (0..a.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(support);
            (lo..=k).map(|i| tail.c_at(k - i) * a[i]).sum()
        })
        .collect();
    let f = run.f_series();
    let series: Vec<f64> = (0..f.len())
        .map(|k| f[k] + if k == 0 { 0.0 } else { coef.delta_bar * r[k - 1] })
        .collect();
    let slack = (0..a.len())
        .map(|k| series[k] - series[k + 1] - coef.g_descent * r[k])
        .collect();
    Ok(LyapunovReport::build(LyapunovKind::G, series, slack, None, Some(r), Vec::new()))
}

/// `H_k = f(x^k) + (L/2) Σ_{i≥1} κ_i a_{k−i}`, checked against
/// `H_k − H_{k+1} ≥ L(1/γ_k − D_{j(k)}) a_k`.
pub fn lyapunov_h(run: &RunRecord, coef: &AdaptiveCoefficients) -> Result<LyapunovReport> {
    let k_max = run.horizon();
    let max_delay = run.rows.iter().map(|r| r.j_max).max().unwrap_or(0);
    let table = EpsilonTable::new(coef.epsilon, (k_max + 1).max(max_delay))?;
    for r in &run.rows {
        let want = coef.c / table.d[r.j_max];
        if (r.gamma - want).abs() > 1e-12 * want {
            return Err(Error::Mismatch(format!(
                "γ_{} = {} but c/D_j(k) = {want}; was the run delay-adaptive with the same ε?",
                r.k, r.gamma
            )));
        }
    }
    let l = run.meta.lipschitz;
    let a = run.delta_sq();
    let f = run.f_series();
    let series: Vec<f64> = (0..f.len())
        .map(|k| {
            let hist: f64 = (0..k).map(|m| table.kappa[k - m] * a[m]).sum();
            f[k] + 0.5 * l * hist
        })
        .collect();
    let slack = run
        .rows
        .iter()
        .enumerate()
        .map(|(k, r)| series[k] - series[k + 1] - l * (1.0 / r.gamma - table.d[r.j_max]) * a[k])
        .collect();
    Ok(LyapunovReport::build(LyapunovKind::H, series, slack, None, None, Vec::new()))
}

/// Ensemble check of the expected `G` descent: at each `k`, the mean over
/// paths of `(G_k − G_{k+1}) − (L/c₀)(1/γ−½−√c₀)R(k)` must be at least
/// `−z` standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDescent {
    pub paths: usize,
    pub mean_drop: Vec<f64>,
    pub mean_r: Vec<f64>,
    pub mean_slack: Vec<f64>,
    pub std_err: Vec<f64>,
    pub z: f64,
    /// `min_k mean_slack_k / std_err_k` over `k` with positive spread.
    pub worst_z: f64,
    pub worst_k: usize,
    pub pass: bool,
}

pub fn g_descent_ensemble(reports: &[LyapunovReport], z: f64) -> Result<EnsembleDescent> {
    let paths = reports.len();
    if paths < 2 {
        return Err(Error::InsufficientSamples("an ensemble needs at least two paths".into()));
    }
    let len = reports.iter().map(|r| r.slack.len()).min().unwrap_or(0);
    let mut out = EnsembleDescent {
        paths,
        mean_drop: vec![0.0; len],
        mean_r: vec![0.0; len],
        mean_slack: vec![0.0; len],
        std_err: vec![0.0; len],
        z,
        worst_z: f64::INFINITY,
        worst_k: 0,
        pass: true,
    };
    let n = paths as f64;
    for k in 0..len {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for rep in reports {
            let s = rep.slack[k];
            sum += s;
            sum_sq += s * s;
            out.mean_drop[k] += (rep.series[k] - rep.series[k + 1]) / n;
            out.mean_r[k] += rep.r_k.as_ref().map_or(0.0, |r| r[k]) / n;
        }
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        out.mean_slack[k] = mean;
        out.std_err[k] = se;
        if mean < -z * se {
            out.pass = false;
        }
        let score = if se > 0.0 {
            mean / se
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        if score < out.worst_z {
            out.worst_z = score;
            out.worst_k = k;
        }
    }
    Ok(out)
}

/// A variant of `G` whose expected descent does follow from the delay bound
/// `E‖d^k‖² ≤ Σ_{l≥1} s_l E a_{k−l}`:
/// `G'_k = f(x^k) + (L/2ε) Σ_{i<k} c_{k−i} a_i`, with
/// `E[G'_k − G'_{k+1}] ≥ L(1/γ − ½ − ε/2 − c₁/(2ε)) E a_k`.
///
/// The history weights telescope exactly against the delay bound, so all
/// of the margin lands on the newest step.
pub fn lyapunov_g_shifted(run: &RunRecord, tail: &TailMoments, epsilon: f64) -> Result<LyapunovReport> {
    let gamma = constant_gamma(run)?;
    let l = run.meta.lipschitz;
    let a = run.delta_sq();
    let support = tail.c.len();
    let w = l / (2.0 * epsilon);
    let f = run.f_series();
    let series: Vec<f64> = (0..f.len())
        .map(|k| {
            let lo = k.saturating_sub(support);
            f[k] + w * (lo..k).map(|i| tail.c_at(k - i) * a[i]).sum::<f64>()
        })
        .collect();
    let descent = l * (1.0 / gamma - 0.5 - epsilon / 2.0 - tail.c_at(1) / (2.0 * epsilon));
    let slack = (0..a.len())
        .map(|k| series[k] - series[k + 1] - descent * a[k])
        .collect();
    Ok(LyapunovReport::build(LyapunovKind::G, series, slack, None, None, Vec::new()))
}
