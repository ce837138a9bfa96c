//! Async-BCD on real threads sharing one solution vector.
//!
//! Every coordinate lives in an `AtomicU64` holding its `f64` bits. Workers
//! read coordinates one at a time with no lock, so the vector they see is in
//! general a mix of iterates, and write by atomically adding their increment
//! to each coordinate of the block. A shared completion counter orders the
//! updates: the value returned by its `fetch_add` is the update's `k`, and
//! the delay of block `b` in that update is `k` minus the counter value
//! observed just before `b` was read.

use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ProblemInstance;
use crate::schedule::{join_delays, split_delays, TRACE_HEADER};
use crate::schedule::{BlockRule, EventTrace, TraceRecord};
use crate::solver::StepPolicy;

/// Which blocks a worker may pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assignment {
    /// Every worker draws from all blocks.
    SharedPool,
    /// Worker `w` only updates `blocks[w]`.
    Fixed { blocks: Vec<Vec<usize>> },
}

/// When to stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Budget {
    /// Exactly this many updates complete.
    Updates { count: usize },
    /// No update starts after this much time has passed.
    WallClock { seconds: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    pub n_workers: usize,
    pub assignment: Assignment,
    /// Block rule each worker applies to its own block set.
    #[serde(default = "BlockRule::uniform")]
    pub rule: BlockRule,
    pub policy: StepPolicy,
    pub budget: Budget,
    /// Busy-wait of `cost_unit_us · multiplier[b]` microseconds after each
    /// gradient of block `b`.
    #[serde(default)]
    pub cost_multipliers: Option<Vec<f64>>,
    #[serde(default = "default_cost_unit")]
    pub cost_unit_us: f64,
    #[serde(default)]
    pub seed: u64,
    /// Keep each update's increment so the final `x` can be rebuilt.
    #[serde(default = "default_true")]
    pub log_increments: bool,
}

fn default_cost_unit() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl RuntimeConfig {
    pub fn new(n_workers: usize, policy: StepPolicy, updates: usize) -> Self {
        Self {
            n_workers,
            assignment: Assignment::SharedPool,
            rule: BlockRule::uniform(),
            policy,
            budget: Budget::Updates { count: updates },
            cost_multipliers: None,
            cost_unit_us: default_cost_unit(),
            seed: 0,
            log_increments: true,
        }
    }

    pub fn validate(&self, num_blocks: usize) -> Result<()> {
        if self.n_workers == 0 {
            return Err(Error::InvalidArgument("at least one worker is required".into()));
        }
        self.policy.validate()?;
        match self.budget {
            // Zero updates would yield an empty measured trace.
            Budget::Updates { count: 0 } => return Err(Error::EmptyTrace),
            Budget::WallClock { seconds } if !(seconds > 0.0 && seconds.is_finite()) => {
                return Err(Error::InvalidArgument(format!("wall-clock budget must be positive, got {seconds}")))
            }
            _ => {}
        }
        if let Assignment::Fixed { blocks } = &self.assignment {
            if blocks.len() != self.n_workers {
                return Err(Error::InvalidArgument(format!(
                    "{} block sets for {} workers",
                    blocks.len(),
                    self.n_workers
                )));
            }
            let mut seen = vec![false; num_blocks];
            for &b in blocks.iter().flatten() {
                if b >= num_blocks {
                    return Err(Error::BlockOutOfRange { index: b, num_blocks });
                }
                seen[b] = true;
            }
            if let Some(b) = seen.iter().position(|s| !s) {
                return Err(Error::InvalidArgument(format!("block {b} is assigned to no worker")));
            }
        }
        if let Some(m) = &self.cost_multipliers {
            if m.len() != num_blocks {
                return Err(Error::DimensionMismatch { expected: num_blocks, got: m.len() });
            }
            if m.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
                return Err(Error::InvalidArgument("cost multipliers must be finite and nonnegative".into()));
            }
        }
        if !(self.cost_unit_us >= 0.0 && self.cost_unit_us.is_finite()) {
            return Err(Error::InvalidArgument("cost unit must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn blocks_of(&self, worker: usize, num_blocks: usize) -> Vec<usize> {
        match &self.assignment {
            Assignment::SharedPool => (0..num_blocks).collect(),
            Assignment::Fixed { blocks } => blocks[worker].clone(),
        }
    }
}

/// One update as observed on a worker thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRecord {
    /// `t_read` is the earliest counter snapshot and `t_complete` is `k`,
    /// both in completed-update units.
    pub record: TraceRecord,
    pub worker: usize,
    /// Seconds since the run started.
    pub t_wall_read: f64,
    pub t_wall_write: f64,
    pub gamma: f64,
    /// The amount added to each coordinate of the block.
    #[serde(default)]
    pub increment: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredTrace {
    pub num_blocks: usize,
    pub records: Vec<MeasuredRecord>,
}

const MEASURED_EXTRA: [&str; 3] = ["worker", "t_wall_read", "t_wall_write"];

impl MeasuredTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The plain event trace, ready for [`crate::solver::run`].
    pub fn event_trace(&self) -> EventTrace {
        EventTrace {
            num_blocks: self.num_blocks,
            records: self.records.iter().map(|r| r.record.clone()).collect(),
        }
    }

    /// `k` runs over `0..K` in order and every delay fits inside `[0, k]`.
    pub fn validate(&self) -> Result<()> {
        self.event_trace().validate()
    }

    /// `x⁰` plus every logged increment, applied in `k` order.
    pub fn replay_increments(&self, x0: &[f64], problem: &ProblemInstance) -> Result<Vec<f64>> {
        let mut x = x0.to_vec();
        for r in &self.records {
            let inc = r
                .increment
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("trace was recorded without increments".into()))?;
            let range = problem.partition().blocks()[r.record.block].clone();
            for (xj, d) in x[range].iter_mut().zip(inc) {
                *xj += d;
            }
        }
        Ok(x)
    }

    /// Event-trace columns followed by `worker,t_wall_read,t_wall_write`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER.iter().chain(&MEASURED_EXTRA))?;
        for m in &self.records {
            let r = &m.record;
            w.write_record([
                r.k.to_string(),
                r.block.to_string(),
                r.j_max().to_string(),
                join_delays(&r.delays),
                r.t_read.to_string(),
                r.t_complete.to_string(),
                m.worker.to_string(),
                m.t_wall_read.to_string(),
                m.t_wall_write.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`MeasuredTrace::write_csv`]. Step sizes and
    /// increments are not part of the file and come back as NaN and `None`.
    pub fn read_csv<R: Read>(input: R, num_blocks: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(TRACE_HEADER.iter().chain(&MEASURED_EXTRA).copied()) {
            return Err(Error::InvalidArgument(format!("unexpected measured-trace header {header:?}")));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or_default();
            let bad = |i: usize| Error::InvalidArgument(format!("bad field {:?}", field(i)));
            let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
            let num = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
            let record = TraceRecord {
                k: int(0)?,
                block: int(1)?,
                delays: split_delays(field(3))?,
                t_read: num(4)?,
                t_complete: num(5)?,
            };
            if record.j_max() != int(2)? {
                return Err(Error::InvalidArgument(format!("j_max column disagrees with j_vec at k = {}", record.k)));
            }
            records.push(MeasuredRecord {
                record,
                worker: int(6)?,
                t_wall_read: num(7)?,
                t_wall_write: num(8)?,
                gamma: f64::NAN,
                increment: None,
            });
        }
        let t = Self { num_blocks, records };
        t.validate()?;
        Ok(t)
    }
}

/// What [`run_shared`] returns.
#[derive(Debug, Clone)]
pub struct SharedRun {
    pub x_final: Vec<f64>,
    pub trace: MeasuredTrace,
    pub elapsed: Duration,
}

struct Shared<'a> {
    x: Vec<AtomicU64>,
    completed: AtomicUsize,
    tickets: AtomicUsize,
    stop: AtomicBool,
    start: Instant,
    problem: &'a ProblemInstance,
    config: &'a RuntimeConfig,
}

impl Shared<'_> {
    fn may_start(&self) -> bool {
        if self.stop.load(Ordering::Relaxed) {
            return false;
        }
        match self.config.budget {
            Budget::Updates { count } => self.tickets.fetch_add(1, Ordering::SeqCst) < count,
            Budget::WallClock { seconds } => self.start.elapsed().as_secs_f64() < seconds,
        }
    }

    fn add(&self, j: usize, inc: f64) {
        let cell = &self.x[j];
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let new = (f64::from_bits(cur) + inc).to_bits();
            match cell.compare_exchange_weak(cur, new, Ordering::SeqCst, Ordering::Relaxed) {
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }
}

fn spin(duration: Duration) {
    let until = Instant::now() + duration;
    while Instant::now() < until {
        std::thread::yield_now();
    }
}

fn worker_loop(shared: &Shared<'_>, worker: usize, log: &mut Vec<MeasuredRecord>) -> Result<()> {
    let problem = shared.problem;
    let config = shared.config;
    let n = problem.num_blocks();
    let blocks = problem.partition().blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(worker as u64);
    let mut chooser = config.rule.generator_over(config.blocks_of(worker, n), n)?;
    let mut schedule = config.policy.schedule(16)?;
    let scale_l = problem.lipschitz();
    let mut x_hat = vec![0.0; problem.dim()];
    let mut snaps = vec![0usize; n];
    while shared.may_start() {
        let b = chooser.next_block(&mut rng);
        let t_wall_read = shared.start.elapsed().as_secs_f64();
        for (blk, range) in blocks.iter().enumerate() {
            snaps[blk] = shared.completed.load(Ordering::SeqCst);
            for j in range.clone() {
                x_hat[j] = f64::from_bits(shared.x[j].load(Ordering::SeqCst));
            }
        }
        let g = problem.grad_block(&x_hat, b)?;
        if let Some(m) = &config.cost_multipliers {
            spin(Duration::from_secs_f64(config.cost_unit_us * m[b] * 1e-6));
        }
        // γ is fixed for every policy except the adaptive one, where the
        // delay is estimated from the counter just before writing; the
        // logged delay can exceed the estimate when other writes land first.
        let oldest = snaps.iter().copied().min().unwrap_or(0);
        let estimate = shared.completed.load(Ordering::SeqCst) - oldest;
        let gamma = schedule.gamma(estimate);
        let scale = gamma / scale_l;
        let increment: Vec<f64> = g.iter().map(|gj| -(scale * gj)).collect();
        for (j, &inc) in blocks[b].clone().zip(&increment) {
            shared.add(j, inc);
        }
        let k = shared.completed.fetch_add(1, Ordering::SeqCst);
        let t_wall_write = shared.start.elapsed().as_secs_f64();
        log.push(MeasuredRecord {
            record: TraceRecord {
                k,
                block: b,
                delays: snaps.iter().map(|&s| k - s).collect(),
                t_read: oldest as f64,
                t_complete: k as f64,
            },
            worker,
            t_wall_read,
            t_wall_write,
            gamma,
            increment: config.log_increments.then_some(increment),
        });
    }
    Ok(())
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

/// Runs `config.n_workers` threads of lock-free async-BCD from `x0`.
///
/// A panicking worker stops the others; the run then fails with
/// [`Error::WorkerPanic`] carrying every record logged up to that point.
pub fn run_shared(problem: &ProblemInstance, x0: &[f64], config: &RuntimeConfig) -> Result<SharedRun> {
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    config.validate(problem.num_blocks())?;
    let shared = Shared {
        x: x0.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        completed: AtomicUsize::new(0),
        tickets: AtomicUsize::new(0),
        stop: AtomicBool::new(false),
        start: Instant::now(),
        problem,
        config,
    };
    let outcomes: Vec<(Vec<MeasuredRecord>, std::result::Result<Result<()>, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.n_workers)
            .map(|w| {
                let shared = &shared;
                s.spawn(move || {
                    let mut log = Vec::new();
                    let out = catch_unwind(AssertUnwindSafe(|| worker_loop(shared, w, &mut log)))
                        .map_err(|p| panic_message(p.as_ref()));
                    if !matches!(out, Ok(Ok(()))) {
                        shared.stop.store(true, Ordering::SeqCst);
                    }
                    (log, out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panics are caught inside the thread"))
            .collect()
    });
    let elapsed = shared.start.elapsed();
    let mut records = Vec::new();
    let mut failure = None;
    for (w, (log, out)) in outcomes.into_iter().enumerate() {
        records.extend(log);
        match out {
            Ok(Ok(())) => {}
            Ok(Err(e)) => failure = failure.or(Some(Err(e))),
            Err(msg) => failure = failure.or(Some(Ok((w, msg)))),
        }
    }
    records.sort_by_key(|r| r.record.k);
    let trace = MeasuredTrace {
        num_blocks: problem.num_blocks(),
        records,
    };
    match failure {
        Some(Err(e)) => return Err(e),
        Some(Ok((worker, message))) => {
            return Err(Error::WorkerPanic {
                worker,
                message,
                completed: trace.len(),
                partial: Box::new(trace),
            })
        }
        None => {}
    }
    let x_final = shared.x.iter().map(|a| f64::from_bits(a.load(Ordering::SeqCst))).collect();
    Ok(SharedRun { x_final, trace, elapsed })
}

/// Runs a short pilot with `config` and returns twice its largest measured
/// delay (at least 1), the default `τ` for a bounded-delay step size.
pub fn pilot_tau(problem: &ProblemInstance, x0: &[f64], config: &RuntimeConfig, updates: usize) -> Result<usize> {
    let mut pilot = config.clone();
    pilot.budget = Budget::Updates { count: updates };
    pilot.log_increments = false;
    let run = run_shared(problem, x0, &pilot)?;
    Ok((2 * run.trace.event_trace().max_delay()).max(1))
}

/// Delay aggregates over the updates of one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDelayStats {
    pub block: usize,
    pub updates: usize,
    pub mean: f64,
    pub max: usize,
    /// `histogram[j]` counts updates with current delay `j`.
    pub histogram: Vec<u64>,
}

/// Per-block statistics of the current delay `j(k)`, grouped by `i_k`.
pub fn delay_stats(trace: &MeasuredTrace) -> Result<Vec<BlockDelayStats>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut stats: Vec<BlockDelayStats> = (0..trace.num_blocks)
        .map(|block| BlockDelayStats {
            block,
            updates: 0,
            mean: 0.0,
            max: 0,
            histogram: Vec::new(),
        })
        .collect();
    for m in &trace.records {
        let j = m.record.j_max();
        let s = stats
            .get_mut(m.record.block)
            .ok_or(Error::BlockOutOfRange { index: m.record.block, num_blocks: trace.num_blocks })?;
        s.updates += 1;
        s.mean += j as f64;
        s.max = s.max.max(j);
        if s.histogram.len() <= j {
            s.histogram.resize(j + 1, 0);
        }
        s.histogram[j] += 1;
    }
    for s in &mut stats {
        if s.updates > 0 {
            s.mean /= s.updates as f64;
        } else {
            s.mean = f64::NAN;
        }
    }
    Ok(stats)
}
