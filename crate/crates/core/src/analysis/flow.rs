//! Explicit Euler integration of the delayed gradient flow
//! `ẋ(t) = −η∇f(x(t − d(t)))` with `0 ≤ d(t) ≤ c`, and its energy
//! `ξ(t) = f(x(t)) + w ∫_{t−c}^{t} (s − (t−c))‖ẋ(s)‖² ds`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objectives::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayProfile {
    Zero,
    Constant { d: f64 },
    /// `d(t) = amplitude·frac(t/period)`.
    Sawtooth { amplitude: f64, period: f64 },
}

impl DelayProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            DelayProfile::Zero => 0.0,
            DelayProfile::Constant { d } => d,
            DelayProfile::Sawtooth { amplitude, period } => amplitude * (t / period).fract(),
        }
    }

    fn max_delay(&self) -> f64 {
        match *self {
            DelayProfile::Zero => 0.0,
            DelayProfile::Constant { d } => d,
            DelayProfile::Sawtooth { amplitude, .. } => amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub dt: f64,
    /// Weight `w` of the kinetic term, the midpoint of `(ηcL²/2, 1/(2ηc))`.
    pub weight: f64,
    pub times: Vec<f64>,
    pub f: Vec<f64>,
    pub xi: Vec<f64>,
    pub x_final: Vec<f64>,
    /// `max_n (ξ_{n+1} − ξ_n)`.
    pub max_increase: f64,
    pub tolerance: f64,
    pub monotone: bool,
}

/// Integrates to time `t_end` with step `dt`.
///
/// The kinetic weight must satisfy `w c < 1/(2η)` and `w > ηcL²/2`, an
/// interval that is nonempty exactly when `η < 1/(Lc)`. `ξ` counts as
/// monotone when no step increases it by more than `tol_per_step`.
pub fn integrate_delayed_flow(
    problem: &ProblemInstance,
    x0: &[f64],
    eta: f64,
    c_delay: f64,
    t_end: f64,
    dt: f64,
    profile: DelayProfile,
    tol_per_step: f64,
) -> Result<FlowResult> {
    let l = problem.lipschitz();
    if !(eta > 0.0 && c_delay > 0.0 && dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidArgument("η, c, dt and T must be positive".into()));
    }
    if eta * l * c_delay >= 1.0 {
        return Err(Error::InfeasibleStep(format!(
            "η = {eta} is not below 1/(Lc) = {}",
            1.0 / (l * c_delay)
        )));
    }
    if profile.max_delay() > c_delay + 1e-12 {
        return Err(Error::InvalidArgument("delay profile exceeds the bound c".into()));
    }
    if dt > c_delay / 10.0 {
        return Err(Error::InvalidArgument("dt must be much smaller than c".into()));
    }
    let weight = 0.5 * (eta * c_delay * l * l / 2.0 + 1.0 / (2.0 * eta * c_delay));
    let steps = (t_end / dt).round() as usize;
    let window = (c_delay / dt).round() as usize;
    let dim = problem.dim();
    let obj = problem.objective();

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    xs.push(x0.to_vec());
    // ‖ẋ‖² on each interval [t_n, t_{n+1})
    let mut speed_sq: Vec<f64> = Vec::with_capacity(steps);
    let mut g = vec![0.0; dim];
    let mut delayed = vec![0.0; dim];
    for n in 0..steps {
        let t = n as f64 * dt;
        let s = (t - profile.at(t)).max(0.0) / dt;
        let lo = (s.floor() as usize).min(n);
        let frac = if lo < n { s - lo as f64 } else { 0.0 };
        for j in 0..dim {
            delayed[j] = xs[lo][j] + frac * (xs[(lo + 1).min(n)][j] - xs[lo][j]);
        }
        obj.gradient(&delayed, &mut g);
        let next: Vec<f64> = xs[n].iter().zip(&g).map(|(x, gj)| x - dt * eta * gj).collect();
        speed_sq.push(eta * eta * linalg::norm_sq(&g));
        xs.push(next);
    }
    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * dt).collect();
    let f: Vec<f64> = xs.iter().map(|x| obj.value(x)).collect();
    // ∫_{t−c}^{t} (s − (t−c))‖ẋ(s)‖² ds with a midpoint rule on each interval
    let xi: Vec<f64> = (0..=steps)
        .map(|n| {
            let first = n.saturating_sub(window);
            let kinetic: f64 = (first..n)
                .map(|m| {
                    let mid = (m as f64 + 0.5) * dt;
                    (mid - (times[n] - c_delay)) * speed_sq[m] * dt
                })
                .sum();
            f[n] + weight * kinetic
        })
        .collect();
    let max_increase = xi.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(FlowResult {
        dt,
        weight,
        monotone: max_increase <= tol_per_step,
        tolerance: tol_per_step,
        max_increase,
        x_final: xs.pop().expect("at least the initial point"),
        times,
        f,
        xi,
    })
}
