//! Experiment configuration: JSON schema and built-in presets.

use std::path::Path;

use asyncbcd::objectives::{
    make_flat_convex, make_logistic, make_nonconvex_test, make_quadratic, random_spd, BlockPartition, IndexBase,
    ProblemInstance, SparseDataset,
};
use asyncbcd::parallel::{Assignment, Budget};
use asyncbcd::schedule::{
    inject_delays, simulate, AgentModel, BlockRule, BoundedLaw, DelaySpec, EventTrace, TailLaw,
};
use asyncbcd::solver::{EpsilonSpec, StepPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<StepPolicy>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub x0: StartSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<RuntimeSpec>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_horizon() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        blocks: usize,
    },
    /// `UΛUᵀ` with eigenvalues evenly spaced in `[eig_min, eig_max]`.
    RandomQuadratic {
        dim: usize,
        eig_min: f64,
        eig_max: f64,
        #[serde(default)]
        seed: u64,
        blocks: usize,
    },
    Logistic {
        /// Sparse `label idx:val …` file; a synthetic set is generated when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default)]
        one_based: bool,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default)]
        data_seed: u64,
        #[serde(default)]
        lambda: f64,
        blocks: usize,
    },
    Nonconvex {
        dim: usize,
        blocks: usize,
    },
    FlatConvex {
        dim: usize,
        blocks: usize,
    },
}

fn default_samples() -> usize {
    200
}

fn default_features() -> usize {
    20
}

fn default_density() -> f64 {
    0.3
}

impl ProblemSpec {
    pub fn build(&self, base_dir: &Path) -> CliResult<ProblemInstance> {
        Ok(match self {
            ProblemSpec::Quadratic { q, b, blocks } => {
                make_quadratic(q.clone(), b.clone(), BlockPartition::contiguous(b.len(), *blocks)?)?
            }
            ProblemSpec::RandomQuadratic { dim, eig_min, eig_max, seed, blocks } => make_quadratic(
                random_spd(*dim, *eig_min, *eig_max, *seed),
                vec![0.0; *dim],
                BlockPartition::contiguous(*dim, *blocks)?,
            )?,
            ProblemSpec::Logistic { path, one_based, samples, features, density, data_seed, lambda, blocks } => {
                let data = match path {
                    Some(p) => {
                        let base = if *one_based { IndexBase::One } else { IndexBase::Zero };
                        SparseDataset::from_path(base_dir.join(p), base)?
                    }
                    None => SparseDataset::synthetic(*samples, *features, *density, *data_seed),
                };
                let dim = data.n_features;
                make_logistic(data, *lambda, BlockPartition::contiguous(dim, *blocks)?)?
            }
            ProblemSpec::Nonconvex { dim, blocks } => make_nonconvex_test(*dim, *blocks)?,
            ProblemSpec::FlatConvex { dim, blocks } => make_flat_convex(*dim, *blocks)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// Delays emerge from simulated agent timing.
    Simulator {
        agents: AgentModel,
        #[serde(default = "BlockRule::uniform")]
        rule: BlockRule,
    },
    /// Delays drawn from a prescribed law.
    Injected {
        delay: DelaySpec,
        #[serde(default = "BlockRule::uniform")]
        rule: BlockRule,
        /// Defaults to the problem's block count.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blocks: Option<usize>,
    },
    /// The two-agent, three-block example with costs 2, 3, 4.
    Example1 {
        #[serde(default = "default_example_runs")]
        runs: usize,
    },
    /// Real threads; see [`RuntimeSpec`].
    Parallel,
}

fn default_example_runs() -> usize {
    1000
}

impl ScheduleSpec {
    pub fn label(&self) -> String {
        match self {
            ScheduleSpec::Simulator { .. } => "simulator".into(),
            ScheduleSpec::Injected { delay, .. } => match delay {
                DelaySpec::Bounded { tau, .. } => format!("bounded-tau{tau}"),
                DelaySpec::StochasticTail { .. } => "stochastic-tail".into(),
                DelaySpec::DeterministicSequence { .. } => "deterministic-sequence".into(),
            },
            ScheduleSpec::Example1 { .. } => "example1".into(),
            ScheduleSpec::Parallel => "parallel".into(),
        }
    }

    /// Generates the trace for one seed.
    pub fn trace(&self, num_blocks: Option<usize>, horizon: usize, seed: u64) -> CliResult<EventTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self {
            ScheduleSpec::Simulator { agents, rule } => {
                if let Some(n) = num_blocks.filter(|&n| n != agents.num_blocks()) {
                    return Err(CliError::Infeasible(format!(
                        "agent model has {} blocks, problem has {n}",
                        agents.num_blocks()
                    )));
                }
                simulate(agents, rule, horizon, &mut rng)?
            }
            ScheduleSpec::Injected { delay, rule, blocks } => {
                let n = (*blocks).or(num_blocks).ok_or_else(|| {
                    CliError::Infeasible("injected schedule needs `blocks` or a problem".into())
                })?;
                if let (Some(b), Some(p)) = (blocks, num_blocks) {
                    if *b != p {
                        return Err(CliError::Infeasible(format!("schedule has {b} blocks, problem has {p}")));
                    }
                }
                inject_delays(rule, n, delay, horizon, &mut rng)?
            }
            ScheduleSpec::Example1 { .. } | ScheduleSpec::Parallel => {
                return Err(CliError::Infeasible(format!(
                    "schedule `{}` does not produce a replayable trace",
                    self.label()
                )))
            }
        })
    }
}

/// Starting point, drawn per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    Constant { value: f64 },
    Uniform { half_width: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for StartSpec {
    fn default() -> Self {
        StartSpec::Uniform { half_width: 1.0 }
    }
}

impl StartSpec {
    pub fn draw(&self, dim: usize, seed: u64) -> CliResult<Vec<f64>> {
        Ok(match self {
            StartSpec::Constant { value } => vec![*value; dim],
            StartSpec::Uniform { half_width } => {
                if !(*half_width > 0.0) {
                    return Err(CliError::Infeasible("x0 half_width must be positive".into()));
                }
                // a stream separate from the trace's
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1);
                (0..dim).map(|_| rng.random_range(-half_width..*half_width)).collect()
            }
            StartSpec::Explicit { values } => {
                if values.len() != dim {
                    return Err(CliError::Infeasible(format!("x0 has {} entries, problem has {dim}", values.len())));
                }
                values.clone()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovChoice {
    Xi,
    F,
    G,
    H,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub lyapunov: Vec<LyapunovChoice>,
    /// Ensemble rate fits; needs a problem with known `min f`.
    #[serde(default)]
    pub rates: bool,
    /// Keep per-run CSV of the Lyapunov series.
    #[serde(default = "default_true")]
    pub write_series: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSpec {
    pub n_workers: usize,
    #[serde(default = "shared_pool")]
    pub assignment: Assignment,
    #[serde(default = "BlockRule::uniform")]
    pub rule: BlockRule,
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_multipliers: Option<Vec<f64>>,
    #[serde(default = "default_cost_unit")]
    pub cost_unit_us: f64,
    /// Replace the policy by a bounded-delay step with `τ` from a pilot run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotSpec>,
}

fn shared_pool() -> Assignment {
    Assignment::SharedPool
}

fn default_cost_unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSpec {
    pub updates: usize,
    pub c: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Infeasible("seeds must be nonempty".into()));
        }
        let g = self.analysis.lyapunov.contains(&LyapunovChoice::G);
        let stochastic = matches!(
            self.schedule,
            ScheduleSpec::Injected { delay: DelaySpec::StochasticTail { .. }, .. }
        );
        if g && !stochastic {
            return Err(CliError::Infeasible("G analysis requires a stochastic-tail schedule".into()));
        }
        let adaptive = matches!(self.policy, Some(StepPolicy::DelayAdaptive { .. }));
        if self.analysis.lyapunov.contains(&LyapunovChoice::H) && !adaptive {
            return Err(CliError::Infeasible("H analysis requires the delay-adaptive policy".into()));
        }
        if matches!(self.schedule, ScheduleSpec::Parallel) && self.runtime.is_none() {
            return Err(CliError::Infeasible("parallel schedule needs a `runtime` section".into()));
        }
        Ok(())
    }

    pub fn with_seeds(mut self, seeds: Option<Vec<u64>>) -> CliResult<Self> {
        if let Some(s) = seeds {
            self.seeds = s;
        }
        self.validate()?;
        Ok(self)
    }
}

pub const PRESETS: &[&str] = &[
    "example1",
    "bounded",
    "geometric",
    "adaptive-spiky",
    "oversized",
    "convex",
    "linear",
    "parallel",
    "parallel-single",
];

fn spiky_sequence() -> Vec<usize> {
    (0..100)
        .map(|k| match k {
            37 | 99 => 50,
            70 => 25,
            _ => k % 4,
        })
        .collect()
}

pub fn preset(name: &str) -> CliResult<ExperimentConfig> {
    let quad = ProblemSpec::RandomQuadratic {
        dim: 10,
        eig_min: 0.2,
        eig_max: 2.0,
        seed: 1,
        blocks: 5,
    };
    let bounded2 = ScheduleSpec::Injected {
        delay: DelaySpec::Bounded { tau: 2, law: BoundedLaw::Uniform },
        rule: BlockRule::uniform(),
        blocks: None,
    };
    let base = |name: &str| ExperimentConfig {
        name: name.into(),
        problem: Some(quad.clone()),
        schedule: bounded2.clone(),
        policy: Some(StepPolicy::BoundedFixed { tau: 2, c: 0.5 }),
        horizon: 10_000,
        seeds: vec![0, 1, 2],
        x0: StartSpec::default(),
        analysis: AnalysisSpec {
            lyapunov: vec![LyapunovChoice::Xi, LyapunovChoice::F],
            rates: false,
            write_series: true,
        },
        runtime: None,
    };
    let cfg = match name {
        "example1" => ExperimentConfig {
            problem: None,
            schedule: ScheduleSpec::Example1 { runs: 1000 },
            policy: None,
            horizon: 2,
            seeds: vec![0],
            analysis: AnalysisSpec::default(),
            ..base(name)
        },
        "bounded" => base(name),
        "geometric" => ExperimentConfig {
            schedule: ScheduleSpec::Injected {
                delay: DelaySpec::StochasticTail { law: TailLaw::Geometric { q: 0.5 }, truncation: None },
                rule: BlockRule::uniform(),
                blocks: None,
            },
            policy: Some(StepPolicy::StochasticUnboundedFixed { c0: 4.0, c: 0.5 }),
            horizon: 1000,
            seeds: (0..20).collect(),
            analysis: AnalysisSpec {
                lyapunov: vec![LyapunovChoice::G],
                rates: false,
                write_series: false,
            },
            ..base(name)
        },
        "adaptive-spiky" => ExperimentConfig {
            schedule: ScheduleSpec::Injected {
                delay: DelaySpec::DeterministicSequence { j_of_k: spiky_sequence() },
                rule: BlockRule::uniform(),
                blocks: None,
            },
            policy: Some(StepPolicy::DelayAdaptive { epsilon: EpsilonSpec::default(), c: 0.9 }),
            seeds: vec![0],
            analysis: AnalysisSpec {
                lyapunov: vec![LyapunovChoice::H],
                rates: false,
                write_series: true,
            },
            ..base(name)
        },
        // γ = 3/(2τ+1), i.e. c = 1.5
        "oversized" => ExperimentConfig {
            policy: Some(StepPolicy::BoundedFixed { tau: 2, c: 1.5 }),
            ..base(name)
        },
        "convex" => ExperimentConfig {
            problem: Some(ProblemSpec::FlatConvex { dim: 20, blocks: 10 }),
            seeds: (0..20).collect(),
            x0: StartSpec::Uniform { half_width: 3.0 },
            analysis: AnalysisSpec {
                lyapunov: vec![LyapunovChoice::Xi],
                rates: true,
                write_series: false,
            },
            ..base(name)
        },
        "linear" => ExperimentConfig {
            problem: Some(ProblemSpec::RandomQuadratic {
                dim: 10,
                eig_min: 1.0,
                eig_max: 4.0,
                seed: 5,
                blocks: 5,
            }),
            horizon: 3000,
            seeds: (0..20).collect(),
            analysis: AnalysisSpec {
                lyapunov: vec![],
                rates: true,
                write_series: false,
            },
            ..base(name)
        },
        "parallel" | "parallel-single" => ExperimentConfig {
            problem: Some(ProblemSpec::RandomQuadratic {
                dim: 4,
                eig_min: 1.0,
                eig_max: 2.0,
                seed: 6,
                blocks: 2,
            }),
            schedule: ScheduleSpec::Parallel,
            policy: Some(StepPolicy::Fixed { gamma: 0.05 }),
            seeds: if name == "parallel" { (0..5).collect() } else { vec![0] },
            analysis: AnalysisSpec::default(),
            runtime: Some(RuntimeSpec {
                n_workers: if name == "parallel" { 4 } else { 1 },
                assignment: Assignment::SharedPool,
                rule: BlockRule::uniform(),
                budget: Budget::Updates { count: 4000 },
                cost_multipliers: Some(vec![1.0, 10.0]),
                cost_unit_us: 5.0,
                pilot: None,
            }),
            ..base(name)
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset `{other}`; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}
