//! The subcommands. Each writes its outputs under `--out` and returns the
//! first failure that should decide the exit code.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use asyncbcd::analysis::{
    bounded_coefficients, check_appendix_inequalities, epsilon_bounded, epsilon_unbounded, g_descent_ensemble,
    linear_rate, loglog_slope, lyapunov_f, lyapunov_g, lyapunov_g_shifted, lyapunov_h, lyapunov_xi,
    adaptive_coefficients, stochastic_coefficients, CoefficientSet, LineFit, LyapunovReport, LyapunovSummary,
};
use asyncbcd::objectives::{ConvexityClass, ProblemInstance};
use asyncbcd::parallel::{delay_stats, pilot_tau, run_shared, BlockDelayStats, RuntimeConfig};
use asyncbcd::schedule::{enumerate_example1, example1_agents, simulate, tail_moments, DelaySpec, Example1Report, TailMoments, DEFAULT_TAIL_TOL};
use asyncbcd::solver::{d_sequence, gamma_bounded, run, EpsilonSpec, RunMeta, RunOptions, StepPolicy};
use asyncbcd::schedule::BlockRule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LyapunovChoice, ScheduleSpec};
use crate::error::{io_err, CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n").map_err(io_err(path))?;
    Ok(())
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(io_err(out))
}

fn problem_of(cfg: &ExperimentConfig, base: &Path) -> CliResult<Option<ProblemInstance>> {
    cfg.problem.as_ref().map(|p| p.build(base)).transpose()
}

#[derive(Debug, Serialize)]
struct TraceSummary {
    seed: u64,
    records: usize,
    mean_delay: f64,
    max_delay: usize,
}

#[derive(Debug, Serialize)]
struct Example1Output {
    report: Example1Report,
    runs: usize,
    /// Counts of the first two completed blocks (1-based) over the runs.
    emitted: BTreeMap<String, usize>,
    unreachable_emitted: usize,
}

pub fn simulate_cmd(cfg: &ExperimentConfig, base: &Path, out: &Path) -> CliResult<()> {
    prepare_out(out)?;
    if let ScheduleSpec::Example1 { runs } = cfg.schedule {
        let report = enumerate_example1();
        let agents = example1_agents();
        let mut emitted = BTreeMap::new();
        let mut bad = 0;
        for seed in 0..runs as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = simulate(&agents, &BlockRule::uniform(), 2, &mut rng)?;
            let pair = (t.records[0].block + 1, t.records[1].block + 1);
            if !report.is_reachable(pair.0, pair.1) {
                bad += 1;
            }
            *emitted.entry(format!("{},{}", pair.0, pair.1)).or_insert(0) += 1;
        }
        println!(
            "two-agent example: unreachable first pairs {:?}; unreachable pairs emitted in {bad} of {runs} runs",
            report.unreachable
        );
        write_json(
            &out.join("example1.json"),
            &Example1Output { report, runs, emitted, unreachable_emitted: bad },
        )?;
        if bad > 0 {
            return Err(CliError::InvariantFailed(format!("{bad} runs emitted an unreachable pair")));
        }
        return Ok(());
    }
    let problem = problem_of(cfg, base)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let trace = cfg.schedule.trace(problem.as_ref().map(|p| p.num_blocks()), cfg.horizon, seed)?;
        trace.write_csv(create(&out.join(format!("trace_seed{seed}.csv")))?)?;
        let delays = trace.current_delays();
        let mean = delays.iter().sum::<usize>() as f64 / delays.len().max(1) as f64;
        println!("seed {seed}: {} records, mean delay {mean:.4}, max delay {}", trace.len(), trace.max_delay());
        summaries.push(TraceSummary {
            seed,
            records: trace.len(),
            mean_delay: mean,
            max_delay: trace.max_delay(),
        });
    }
    write_json(&out.join("simulate_summary.json"), &summaries)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub f0: f64,
    pub f_final: f64,
    pub max_delay: usize,
    pub lyapunov: Vec<LyapunovSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub paths: usize,
    pub pass: bool,
    pub worst_z: f64,
    pub worst_k: usize,
    /// The shifted variant `G'`, reported alongside.
    pub shifted_pass: bool,
    pub shifted_worst_z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSummary {
    pub k_lo: usize,
    pub k_hi: usize,
    pub loglog: Option<LineFit>,
    /// `slope` holds the per-step factor.
    pub linear: Option<LineFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub name: String,
    pub group: String,
    pub convexity: ConvexityClass,
    pub optimal_value: Option<f64>,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub analyses: Vec<LyapunovChoice>,
    pub runs: Vec<RunSummary>,
    pub g_ensemble: Option<EnsembleSummary>,
    pub rates: Option<RateSummary>,
    pub pathwise_pass: bool,
    pub config: ExperimentConfig,
}

fn policy_label(p: &StepPolicy) -> &'static str {
    match p {
        StepPolicy::BoundedFixed { .. } => "bounded-fixed",
        StepPolicy::StochasticUnboundedFixed { .. } => "stochastic-unbounded-fixed",
        StepPolicy::DelayAdaptive { .. } => "delay-adaptive",
        StepPolicy::Fixed { .. } => "fixed",
    }
}

/// Everything the selected analyses need, computed before any run so that
/// an infeasible step is reported without doing work.
struct Prepared {
    tau: Option<usize>,
    xi_eps: Option<f64>,
    bounded: Option<asyncbcd::analysis::BoundedCoefficients>,
    tail: Option<TailMoments>,
    stochastic: Option<asyncbcd::analysis::StochasticCoefficients>,
    adaptive: Option<asyncbcd::analysis::AdaptiveCoefficients>,
}

fn prepare(cfg: &ExperimentConfig, problem: &ProblemInstance, policy: &StepPolicy) -> CliResult<Prepared> {
    policy.validate()?;
    let wants = |c| cfg.analysis.lyapunov.contains(&c);
    let tau = match (policy, &cfg.schedule) {
        (StepPolicy::BoundedFixed { tau, .. }, _) => Some(*tau),
        (_, ScheduleSpec::Injected { delay: DelaySpec::Bounded { tau, .. }, .. }) => Some(*tau),
        _ => None,
    };
    let mut p = Prepared { tau, xi_eps: None, bounded: None, tail: None, stochastic: None, adaptive: None };
    if wants(LyapunovChoice::Xi) || wants(LyapunovChoice::F) {
        let tau = tau.ok_or_else(|| CliError::Infeasible("ξ and F analyses need a delay bound τ".into()))?;
        let gamma = policy
            .fixed_gamma()
            .ok_or_else(|| CliError::Infeasible("ξ and F analyses need a constant step".into()))?;
        p.xi_eps = Some(epsilon_bounded(gamma, tau)?);
        if let CoefficientSet::Bounded(b) = bounded_coefficients(problem.num_blocks(), problem.lipschitz(), gamma, tau)?.set {
            p.bounded = Some(b);
        }
    }
    if wants(LyapunovChoice::G) {
        let ScheduleSpec::Injected { delay: DelaySpec::StochasticTail { law, .. }, .. } = &cfg.schedule else {
            return Err(CliError::Infeasible("G analysis requires a stochastic-tail schedule".into()));
        };
        let tail = tail_moments(law, DEFAULT_TAIL_TOL)?;
        let gamma = policy
            .fixed_gamma()
            .ok_or_else(|| CliError::Infeasible("G analysis needs a constant step".into()))?;
        if let CoefficientSet::StochasticUnbounded(s) =
            stochastic_coefficients(problem.num_blocks(), problem.lipschitz(), gamma, tail.c0)?.set
        {
            p.stochastic = Some(s);
        }
        p.tail = Some(tail);
    }
    if wants(LyapunovChoice::H) {
        let StepPolicy::DelayAdaptive { epsilon, c } = *policy else {
            return Err(CliError::Infeasible("H analysis requires the delay-adaptive policy".into()));
        };
        if let CoefficientSet::DelayAdaptive(a) = adaptive_coefficients(epsilon, c, 64)?.set {
            p.adaptive = Some(a);
        }
    }
    Ok(p)
}

pub fn solve_cmd(cfg: &ExperimentConfig, base: &Path, out: &Path) -> CliResult<()> {
    let problem = problem_of(cfg, base)?.ok_or_else(|| CliError::Infeasible("solve needs a problem".into()))?;
    let policy = cfg.policy.ok_or_else(|| CliError::Infeasible("solve needs a step policy".into()))?;
    let prep = prepare(cfg, &problem, &policy)?;
    prepare_out(out)?;
    let opts_for = |seed| RunOptions {
        trace_id: format!("{}-seed{seed}", cfg.schedule.label()),
        seed: Some(seed),
        ..RunOptions::default()
    };
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    let mut g_reports = Vec::new();
    let mut g_shifted = Vec::new();
    let mut pathwise_failures = Vec::new();
    for &seed in &cfg.seeds {
        let trace = cfg.schedule.trace(Some(problem.num_blocks()), cfg.horizon, seed)?;
        let x0 = cfg.x0.draw(problem.dim(), seed)?;
        let record = run(&problem, &trace, &policy, &x0, cfg.horizon, &opts_for(seed))?;
        trace.write_csv(create(&out.join(format!("trace_seed{seed}.csv")))?)?;
        record.write_csv(create(&out.join(format!("run_seed{seed}.csv")))?)?;
        record.write_meta_json(create(&out.join(format!("run_seed{seed}.meta.json")))?)?;
        let mut lyap: Vec<(LyapunovChoice, LyapunovReport)> = Vec::new();
        for choice in &cfg.analysis.lyapunov {
            let rep = match choice {
                LyapunovChoice::Xi => lyapunov_xi(&record, prep.tau.expect("prepared"), prep.xi_eps.expect("prepared"))?,
                LyapunovChoice::F => lyapunov_f(&record, prep.bounded.as_ref().expect("prepared"))?,
                LyapunovChoice::G => {
                    let tail = prep.tail.as_ref().expect("prepared");
                    let sc = prep.stochastic.as_ref().expect("prepared");
                    g_shifted.push(lyapunov_g_shifted(&record, tail, sc.epsilon)?);
                    lyapunov_g(&record, tail, sc)?
                }
                LyapunovChoice::H => lyapunov_h(&record, prep.adaptive.as_ref().expect("prepared"))?,
            };
            lyap.push((*choice, rep));
        }
        for (choice, rep) in &lyap {
            if cfg.analysis.write_series {
                let name = format!("lyap_{}_seed{seed}.csv", serde_json::to_value(choice)?.as_str().unwrap_or("v"));
                rep.write_csv(create(&out.join(name))?)?;
            }
            if *choice != LyapunovChoice::G && !rep.pathwise_pass {
                pathwise_failures.push(format!("{choice:?} seed {seed}: min scaled slack {:e}", rep.min_scaled_slack));
            }
        }
        let summary = RunSummary {
            seed,
            f0: record.f_series()[0],
            f_final: record.meta.f_final,
            max_delay: trace.max_delay(),
            lyapunov: lyap.iter().map(|(_, r)| r.summary()).collect(),
        };
        println!(
            "seed {seed}: f {:.6e} -> {:.6e}, max delay {}{}",
            summary.f0,
            summary.f_final,
            summary.max_delay,
            summary
                .lyapunov
                .iter()
                .map(|l| format!(", {:?} min slack {:.3e}", l.kind, l.min_slack))
                .collect::<String>()
        );
        for (choice, rep) in lyap {
            if choice == LyapunovChoice::G {
                g_reports.push(rep);
            }
        }
        summaries.push(summary);
        runs.push(record);
    }
    let g_ensemble = if g_reports.len() >= 2 {
        let e = g_descent_ensemble(&g_reports, 3.0)?;
        let s = g_descent_ensemble(&g_shifted, 3.0)?;
        println!(
            "G ensemble over {} paths: pass {} (worst z {:.2} at k = {}); shifted G': pass {} (worst z {:.2})",
            e.paths, e.pass, e.worst_z, e.worst_k, s.pass, s.worst_z
        );
        Some(EnsembleSummary {
            paths: e.paths,
            pass: e.pass,
            worst_z: e.worst_z,
            worst_k: e.worst_k,
            shifted_pass: s.pass,
            shifted_worst_z: s.worst_z,
        })
    } else {
        None
    };
    let rates = if cfg.analysis.rates {
        let min_f = problem
            .optimal_value()
            .ok_or_else(|| CliError::Infeasible("rate fits need a problem with known min f".into()))?;
        let gap = asyncbcd::analysis::mean_gap(&runs, min_f)?;
        write_gap_csv(&out.join("mean_gap.csv"), &gap)?;
        let r = rate_summary(&gap);
        if let Some(l) = &r.loglog {
            println!("log-log slope on [{}, {}]: {:.4} (r² {:.4})", r.k_lo, r.k_hi, l.slope, l.r_squared);
        }
        if let Some(l) = &r.linear {
            println!("linear factor {:.6} (r² {:.5})", l.slope, l.r_squared);
        }
        Some(r)
    } else {
        None
    };
    let summary = SolveSummary {
        name: cfg.name.clone(),
        group: format!("{}/{}/{}", problem.id(), cfg.schedule.label(), policy_label(&policy)),
        convexity: problem.convexity(),
        optimal_value: problem.optimal_value(),
        horizon: cfg.horizon,
        seeds: cfg.seeds.clone(),
        analyses: cfg.analysis.lyapunov.clone(),
        runs: summaries,
        g_ensemble,
        rates,
        pathwise_pass: pathwise_failures.is_empty(),
        config: cfg.clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if pathwise_failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::InvariantFailed(pathwise_failures.join("; ")))
    }
}

fn rate_summary(gap: &[f64]) -> RateSummary {
    let k_hi = gap.len() - 1;
    let k_lo = (k_hi / 10).max(1);
    RateSummary {
        k_lo,
        k_hi,
        loglog: loglog_slope(gap, k_lo, k_hi).ok(),
        linear: linear_rate(gap).ok(),
    }
}

fn write_gap_csv(path: &Path, gap: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["k", "mean_gap"]).map_err(asyncbcd::Error::from)?;
    for (k, g) in gap.iter().enumerate() {
        w.write_record([k.to_string(), g.to_string()]).map_err(asyncbcd::Error::from)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ParallelRunSummary {
    seed: u64,
    n_workers: usize,
    updates: usize,
    policy: StepPolicy,
    f0: f64,
    f_final: f64,
    elapsed_s: f64,
    stats: Vec<BlockDelayStats>,
}

pub fn parallel_cmd(cfg: &ExperimentConfig, base: &Path, out: &Path) -> CliResult<()> {
    let problem = problem_of(cfg, base)?.ok_or_else(|| CliError::Infeasible("parallel needs a problem".into()))?;
    let spec = cfg
        .runtime
        .as_ref()
        .ok_or_else(|| CliError::Infeasible("parallel needs a `runtime` section".into()))?;
    let policy = cfg.policy.ok_or_else(|| CliError::Infeasible("parallel needs a step policy".into()))?;
    prepare_out(out)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let mut rt = RuntimeConfig::new(spec.n_workers, policy, 1);
        rt.assignment = spec.assignment.clone();
        rt.rule = spec.rule.clone();
        rt.budget = spec.budget;
        rt.cost_multipliers = spec.cost_multipliers.clone();
        rt.cost_unit_us = spec.cost_unit_us;
        rt.seed = seed;
        rt.log_increments = false;
        let x0 = cfg.x0.draw(problem.dim(), seed)?;
        if let Some(pilot) = spec.pilot {
            let tau = pilot_tau(&problem, &x0, &rt, pilot.updates)?;
            rt.policy = StepPolicy::BoundedFixed { tau, c: pilot.c };
            println!("seed {seed}: pilot of {} updates gives τ = {tau}", pilot.updates);
        }
        let result = run_shared(&problem, &x0, &rt)?;
        result.trace.write_csv(create(&out.join(format!("measured_seed{seed}.csv")))?)?;
        let stats = delay_stats(&result.trace)?;
        write_json(&out.join(format!("delay_stats_seed{seed}.json")), &stats)?;
        let means: Vec<String> = stats.iter().map(|s| format!("{:.3}", s.mean)).collect();
        println!(
            "seed {seed}: {} updates in {:.3}s, mean delay per block [{}]",
            result.trace.len(),
            result.elapsed.as_secs_f64(),
            means.join(", ")
        );
        summaries.push(ParallelRunSummary {
            seed,
            n_workers: rt.n_workers,
            updates: result.trace.len(),
            policy: rt.policy,
            f0: problem.eval(&x0)?,
            f_final: problem.eval(&result.x_final)?,
            elapsed_s: result.elapsed.as_secs_f64(),
            stats,
        });
    }
    write_json(&out.join("parallel_summary.json"), &summaries)
}

#[derive(Debug, Serialize)]
struct CriterionRow {
    criterion: usize,
    group: String,
    check: String,
    value: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct GroupReport {
    group: String,
    convexity: ConvexityClass,
    dirs: Vec<String>,
    runs: usize,
    horizon: usize,
    rates: Option<RateSummary>,
    g_ensemble: Vec<EnsembleSummary>,
    pathwise_pass: bool,
}

#[derive(Debug, Serialize)]
struct Report {
    groups: Vec<GroupReport>,
    criteria: Vec<CriterionRow>,
}

fn read_f_series(dir: &Path, seed: u64) -> CliResult<Vec<f64>> {
    let run_path = dir.join(format!("run_seed{seed}.csv"));
    let meta_path = dir.join(format!("run_seed{seed}.meta.json"));
    let file = File::open(&run_path).map_err(|_| CliError::Missing(run_path.display().to_string()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let col = rdr
        .headers()
        .map_err(asyncbcd::Error::from)?
        .iter()
        .position(|h| h == "f")
        .ok_or_else(|| CliError::Missing(format!("column f in {}", run_path.display())))?;
    let mut f = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(asyncbcd::Error::from)?;
        let v = row.get(col).unwrap_or_default();
        f.push(v.parse().map_err(|_| CliError::Missing(format!("bad f value {v:?} in {}", run_path.display())))?);
    }
    let meta_file = File::open(&meta_path).map_err(|_| CliError::Missing(meta_path.display().to_string()))?;
    let meta: RunMeta = serde_json::from_reader(meta_file)?;
    f.push(meta.f_final);
    Ok(f)
}

fn sanitize(group: &str) -> String {
    group.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn report_cmd(dirs: &[PathBuf], out: &Path) -> CliResult<()> {
    let mut by_group: BTreeMap<String, Vec<(PathBuf, SolveSummary)>> = BTreeMap::new();
    for dir in dirs {
        let path = dir.join("summary.json");
        let file = File::open(&path).map_err(|_| CliError::Missing(format!("{} (run `solve` first)", path.display())))?;
        let s: SolveSummary = serde_json::from_reader(file)?;
        by_group.entry(s.group.clone()).or_default().push((dir.clone(), s));
    }
    if by_group.is_empty() {
        return Err(CliError::Missing("no run directories given".into()));
    }
    prepare_out(out)?;
    let mut groups = Vec::new();
    let mut criteria = Vec::new();
    for (group, members) in by_group {
        let horizon = members[0].1.horizon;
        if members.iter().any(|(_, s)| s.horizon != horizon) {
            return Err(CliError::Infeasible(format!("group {group} mixes horizons")));
        }
        let convexity = members[0].1.convexity;
        let mut mean: Option<Vec<f64>> = None;
        let mut count = 0usize;
        let optimal = members[0].1.optimal_value;
        if let Some(min_f) = optimal {
            let mut acc = vec![0.0; horizon + 1];
            for (dir, s) in &members {
                for &seed in &s.seeds {
                    let f = read_f_series(dir, seed)?;
                    if f.len() != acc.len() {
                        return Err(CliError::Infeasible(format!("run {seed} in {} has {} values", dir.display(), f.len())));
                    }
                    acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v - min_f);
                    count += 1;
                }
            }
            acc.iter_mut().for_each(|a| *a /= count.max(1) as f64);
            mean = Some(acc);
        }
        let rates = mean.as_ref().map(|g| rate_summary(g));
        if let Some(g) = &mean {
            write_gap_csv(&out.join(format!("mean_gap_{}.csv", sanitize(&group))), g)?;
        }
        let pathwise_pass = members.iter().all(|(_, s)| s.pathwise_pass);
        let analyses: Vec<LyapunovChoice> = members.iter().flat_map(|(_, s)| s.analyses.clone()).collect();
        let min_slack = |kind: LyapunovChoice| {
            members
                .iter()
                .flat_map(|(_, s)| s.runs.iter())
                .flat_map(|r| r.lyapunov.iter())
                .filter(|l| serde_json::to_value(l.kind).ok() == serde_json::to_value(kind).ok())
                .map(|l| l.min_scaled_slack)
                .fold(f64::INFINITY, f64::min)
        };
        if analyses.contains(&LyapunovChoice::Xi) {
            let v = min_slack(LyapunovChoice::Xi);
            criteria.push(CriterionRow { criterion: 1, group: group.clone(), check: "ξ min scaled slack ≥ −1e-9".into(), value: v, pass: v >= -1e-9 });
        }
        if analyses.contains(&LyapunovChoice::H) {
            let v = min_slack(LyapunovChoice::H);
            criteria.push(CriterionRow { criterion: 2, group: group.clone(), check: "H min scaled slack ≥ −1e-9".into(), value: v, pass: v >= -1e-9 });
        }
        let g_ensemble: Vec<EnsembleSummary> = members.iter().filter_map(|(_, s)| s.g_ensemble.clone()).collect();
        for g in &g_ensemble {
            criteria.push(CriterionRow { criterion: 3, group: group.clone(), check: "G ensemble worst z ≥ −3".into(), value: g.worst_z, pass: g.pass });
        }
        if let Some(r) = &rates {
            match convexity {
                ConvexityClass::Convex => {
                    if let Some(l) = &r.loglog {
                        criteria.push(CriterionRow { criterion: 4, group: group.clone(), check: format!("log-log slope on [{}, {}] ≤ −0.9", r.k_lo, r.k_hi), value: l.slope, pass: l.slope <= -0.9 });
                    }
                }
                ConvexityClass::RestrictedStronglyConvex => {
                    if let Some(l) = &r.linear {
                        criteria.push(CriterionRow { criterion: 5, group: group.clone(), check: "linear factor < 1 with r² ≥ 0.99".into(), value: l.slope, pass: l.slope < 1.0 && l.r_squared >= 0.99 });
                    }
                }
                ConvexityClass::Nonconvex => {}
            }
        }
        println!("== {group} ({count} runs from {} dirs)", members.len());
        if let Some(r) = &rates {
            if let Some(l) = &r.loglog {
                println!("   log-log slope {:.4} (r² {:.4})", l.slope, l.r_squared);
            }
            if let Some(l) = &r.linear {
                println!("   linear factor {:.6} (r² {:.5})", l.slope, l.r_squared);
            }
        }
        groups.push(GroupReport {
            group,
            convexity,
            dirs: members.iter().map(|(d, _)| d.display().to_string()).collect(),
            runs: members.iter().map(|(_, s)| s.runs.len()).sum(),
            horizon,
            rates,
            g_ensemble,
            pathwise_pass,
        });
    }
    for c in &criteria {
        println!("[{}] criterion {}: {} :: {} = {:.4e}", if c.pass { "PASS" } else { "FAIL" }, c.criterion, c.group, c.check, c.value);
    }
    write_json(&out.join("report.json"), &Report { groups, criteria })
}

#[derive(Debug, Serialize)]
struct SelftestRow {
    check: String,
    pass: bool,
    detail: String,
}

pub fn selftest_cmd(trials: usize, out: Option<&Path>) -> CliResult<()> {
    let mut rows = Vec::new();
    let ineq = check_appendix_inequalities(trials, 7);
    for (name, stat) in [
        ("young", ineq.young),
        ("cauchy-schwarz", ineq.cauchy_schwarz),
        ("sum-of-squares", ineq.sum_of_squares),
        ("telescoping", ineq.telescoping),
    ] {
        rows.push(SelftestRow {
            check: format!("inequality {name}"),
            pass: stat.pass(),
            detail: format!("{} trials, worst margin {:.3e}", stat.trials, stat.worst_margin),
        });
    }
    let mut formula = |check: &str, got: f64, want: f64, tol: f64| {
        rows.push(SelftestRow {
            check: check.into(),
            pass: (got - want).abs() <= tol,
            detail: format!("got {got:.12}, want {want:.12}"),
        });
    };
    formula("γ = 2c/(2τ+1), τ = 2, c = ½", gamma_bounded(2, 0.5)?, 0.2, 1e-14);
    let b: f64 = 3.25;
    formula("ε bounded, γ = 0.2, τ = 2", epsilon_bounded(0.2, 2)?, (b - (b * b - 4.0).sqrt()) / 2.0, 1e-12);
    formula("ε unbounded, γ = 0.2, c₀ = 4", epsilon_unbounded(0.2, 4.0)?, 4.5 - (4.5f64 * 4.5 - 4.0).sqrt(), 1e-12);
    let d2 = 0.5 + std::f64::consts::PI.powi(2) / 12.0 + 2.5;
    formula("D₂ for ε_i = i⁻²", d_sequence(&EpsilonSpec::default(), 2)?, d2, 1e-10);
    let tail = tail_moments(&asyncbcd::schedule::TailLaw::Geometric { q: 0.5 }, 1e-12)?;
    formula("c₀ of geometric q = ½", tail.c0, 4.0, 1e-9);
    let oversized = gamma_bounded(2, 1.5).is_err();
    rows.push(SelftestRow {
        check: "γ = 3/(2τ+1) is rejected".into(),
        pass: oversized,
        detail: String::new(),
    });
    let mut ok = true;
    for r in &rows {
        ok &= r.pass;
        println!("[{}] {} {}", if r.pass { "PASS" } else { "FAIL" }, r.check, r.detail);
    }
    if let Some(dir) = out {
        prepare_out(dir)?;
        write_json(&dir.join("selftest.json"), &rows)?;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::InvariantFailed("selftest".into()))
    }
}
