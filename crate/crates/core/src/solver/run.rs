use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{step, SolverState, StepPolicy};
use crate::error::{Error, Result};
use crate::linalg;
use crate::objectives::ProblemInstance;
use crate::schedule::EventTrace;

/// Per-iteration quantities of a replayed run; `f` and `grad_norm` are taken
/// at `x^k` before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub k: usize,
    pub block: usize,
    pub j_max: usize,
    pub gamma: f64,
    pub f: f64,
    pub grad_norm: f64,
    pub delta_norm: f64,
    pub d_norm: f64,
}

/// Identifying metadata written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub problem_id: String,
    pub policy: StepPolicy,
    pub trace_id: String,
    pub seed: Option<u64>,
    pub horizon: usize,
    pub lipschitz: f64,
    pub num_blocks: usize,
    pub f_final: f64,
    pub optimal_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<RunRow>,
    pub x0: Vec<f64>,
    pub x_final: Vec<f64>,
    /// Every iterate `x^0, …, x^K`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `(i_k, Δ^k on block i_k)` for every `k`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<(usize, Vec<f64>)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub trace_id: String,
    pub seed: Option<u64>,
    pub record_iterates: bool,
    pub record_deltas: bool,
    /// Full-gradient norms cost a full gradient per step.
    pub grad_norms: bool,
    /// Fail with [`Error::InvariantViolation`] when the delayed-read bound
    /// `‖d^k‖ ≤ Σ_{i=k−j(k)}^{k−1} ‖Δ^i‖` or the update norm identity breaks.
    pub check_invariants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            trace_id: "trace".into(),
            seed: None,
            record_iterates: false,
            record_deltas: false,
            grad_norms: true,
            check_invariants: true,
        }
    }
}

impl RunRecord {
    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    /// `f(x^0), …, f(x^K)`.
    pub fn f_series(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.rows.iter().map(|r| r.f).collect();
        f.push(self.meta.f_final);
        f
    }

    /// `‖Δ^k‖₂²` for `k = 0, …, K−1`.
    pub fn delta_sq(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta_norm * r.delta_norm).collect()
    }

    pub fn gap_series(&self) -> Option<Vec<f64>> {
        let m = self.meta.optimal_value?;
        Some(self.f_series().into_iter().map(|f| f - m).collect())
    }

    /// CSV with header `k,i_k,j_max,gamma_k,f,grad_norm,delta_norm,d_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "i_k", "j_max", "gamma_k", "f", "grad_norm", "delta_norm", "d_norm"])?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.block.to_string(),
                r.j_max.to_string(),
                r.gamma.to_string(),
                r.f.to_string(),
                r.grad_norm.to_string(),
                r.delta_norm.to_string(),
                r.d_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.meta)?;
        Ok(())
    }
}

/// Spacing of doubles near zero; below `f64::MIN_POSITIVE` rounding is absolute.
const SUBNORMAL_ULP: f64 = 4.9406564584124654e-324;

/// Replays the first `horizon` records of `trace` through [`step`].
pub fn run(
    problem: &ProblemInstance,
    trace: &EventTrace,
    policy: &StepPolicy,
    x0: &[f64],
    horizon: usize,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if trace.len() < horizon {
        return Err(Error::InvalidArgument(format!(
            "trace has {} records, horizon {horizon} requested",
            trace.len()
        )));
    }
    if trace.num_blocks != problem.num_blocks() {
        return Err(Error::Mismatch(format!(
            "trace has {} blocks, problem has {}",
            trace.num_blocks,
            problem.num_blocks()
        )));
    }
    let records = &trace.records[..horizon];
    let max_delay = records.iter().map(|r| r.j_max()).max().unwrap_or(0);
    let mut schedule = policy.schedule(max_delay)?;
    let mut state = SolverState::new(problem.partition().clone(), x0.to_vec())?;
    let mut rows = Vec::with_capacity(horizon);
    let mut iterates = opts.record_iterates.then(|| vec![x0.to_vec()]);
    let mut deltas = opts.record_deltas.then(Vec::new);
    let mut grad = vec![0.0; problem.dim()];
    let mut norms: Vec<f64> = Vec::with_capacity(horizon);
    for rec in records {
        let k = rec.k;
        let f = problem.objective().value(state.x());
        let grad_norm = if opts.grad_norms {
            problem.objective().gradient(state.x(), &mut grad);
            linalg::norm(&grad)
        } else {
            f64::NAN
        };
        let j_max = rec.j_max();
        let gamma = schedule.gamma(j_max);
        let out = step(&mut state, problem, rec.block, &rec.delays, gamma)?;
        if opts.check_invariants {
            let lo = k.saturating_sub(j_max);
            let bound: f64 = norms[lo..k].iter().sum();
            let ulp_floor = SUBNORMAL_ULP * (problem.dim() as f64).sqrt();
            if out.d_norm > bound * (1.0 + 1e-12) + 1e-15 * linalg::norm(state.x()) + 4.0 * ulp_floor {
                return Err(Error::InvariantViolation(format!(
                    "‖d^{k}‖ = {:e} exceeds Σ‖Δ^i‖ = {bound:e}",
                    out.d_norm
                )));
            }
            let lhs = problem.lipschitz() * out.delta_norm;
            let rhs = gamma * out.block_grad_norm;
            // Δ is rounded at the scale of x, not of the step itself
            let x_scale = problem.lipschitz() * linalg::norm(state.x());
            if (lhs - rhs).abs() > 1e-12 * lhs.max(rhs) + 8.0 * f64::EPSILON * x_scale + 4.0 * problem.lipschitz() * ulp_floor {
                return Err(Error::InvariantViolation(format!(
                    "L‖Δ^{k}‖ = {lhs:e} differs from γ‖∇f(x̂)‖ = {rhs:e}"
                )));
            }
        }
        norms.push(out.delta_norm);
        rows.push(RunRow {
            k,
            block: rec.block,
            j_max,
            gamma,
            f,
            grad_norm,
            delta_norm: out.delta_norm,
            d_norm: out.d_norm,
        });
        if let Some(it) = iterates.as_mut() {
            it.push(state.x().to_vec());
        }
        if let Some(d) = deltas.as_mut() {
            d.push((rec.block, out.delta));
        }
    }
    let x_final = state.x().to_vec();
    Ok(RunRecord {
        meta: RunMeta {
            problem_id: problem.id().to_string(),
            policy: *policy,
            trace_id: opts.trace_id.clone(),
            seed: opts.seed,
            horizon,
            lipschitz: problem.lipschitz(),
            num_blocks: problem.num_blocks(),
            f_final: problem.objective().value(&x_final),
            optimal_value: problem.optimal_value(),
        },
        rows,
        x0: x0.to_vec(),
        x_final,
        iterates,
        deltas,
    })
}
