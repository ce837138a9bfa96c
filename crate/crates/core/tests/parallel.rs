use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use asyncbcd::objectives::{make_quadratic, random_spd, BlockPartition, ConvexityClass, Objective, ProblemInstance};
use asyncbcd::parallel::{delay_stats, pilot_tau, run_shared, Assignment, Budget, MeasuredTrace, RuntimeConfig};
use asyncbcd::schedule::BlockRule;
use asyncbcd::solver::{run, RunOptions, StepPolicy};
use asyncbcd::Error;

fn quadratic(dim: usize, blocks: usize) -> ProblemInstance {
    let q = random_spd(dim, 1.0, 4.0, 3);
    make_quadratic(q, vec![0.0; dim], BlockPartition::contiguous(dim, blocks).unwrap()).unwrap()
}

fn x0(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| 1.0 + 0.1 * i as f64).collect()
}

#[test]
fn single_worker_matches_sequential_solver_bitwise() {
    let p = quadratic(8, 4);
    let policy = StepPolicy::BoundedFixed { tau: 2, c: 0.5 };
    for rule in [BlockRule::Cyclic, BlockRule::uniform()] {
        let mut cfg = RuntimeConfig::new(1, policy, 2000);
        cfg.rule = rule;
        cfg.seed = 11;
        let out = run_shared(&p, &x0(8), &cfg).unwrap();
        assert!(out.trace.records.iter().all(|r| r.record.j_max() == 0));
        let seq = run(&p, &out.trace.event_trace(), &policy, &x0(8), 2000, &RunOptions::default()).unwrap();
        let a: Vec<u64> = out.x_final.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = seq.x_final.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn four_workers_converge_and_keep_every_update() {
    let p = quadratic(16, 8);
    let policy = StepPolicy::BoundedFixed { tau: 16, c: 0.5 };
    let mut cfg = RuntimeConfig::new(4, policy, 100_000);
    cfg.cost_multipliers = Some(vec![1.0; 8]);
    cfg.cost_unit_us = 0.5;
    let start = x0(16);
    let out = run_shared(&p, &start, &cfg).unwrap();
    out.trace.validate().unwrap();
    let ks: Vec<usize> = out.trace.records.iter().map(|r| r.record.k).collect();
    assert_eq!(ks, (0..100_000).collect::<Vec<_>>());
    let f0 = p.eval(&start).unwrap();
    assert!(p.eval(&out.x_final).unwrap() < 1e-6 * f0);
    let rebuilt = out.trace.replay_increments(&start, &p).unwrap();
    for (a, b) in rebuilt.iter().zip(&out.x_final) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    assert!(out.trace.event_trace().max_delay() > 0, "four workers never overlapped");
}

#[test]
fn expensive_block_sees_larger_delays() {
    let p = quadratic(4, 2);
    for seed in 0..5 {
        let mut cfg = RuntimeConfig::new(2, StepPolicy::Fixed { gamma: 0.05 }, 3000);
        cfg.cost_multipliers = Some(vec![1.0, 10.0]);
        cfg.cost_unit_us = 5.0;
        cfg.seed = seed;
        let out = run_shared(&p, &x0(4), &cfg).unwrap();
        let stats = delay_stats(&out.trace).unwrap();
        assert!(stats[1].mean > stats[0].mean, "seed {seed}: {stats:?}");
        for s in &stats {
            assert_eq!(s.histogram.iter().sum::<u64>() as usize, s.updates);
        }
    }
}

#[test]
fn fixed_assignment_respects_blocks() {
    let p = quadratic(6, 3);
    let mut cfg = RuntimeConfig::new(2, StepPolicy::Fixed { gamma: 0.1 }, 500);
    cfg.assignment = Assignment::Fixed { blocks: vec![vec![0], vec![1, 2]] };
    let out = run_shared(&p, &x0(6), &cfg).unwrap();
    for r in &out.trace.records {
        assert_eq!(r.worker == 0, r.record.block == 0);
    }
    cfg.assignment = Assignment::Fixed { blocks: vec![vec![0], vec![1]] };
    assert!(run_shared(&p, &x0(6), &cfg).is_err());
}

#[test]
fn single_worker_stats_are_zero_and_pilot_gives_one() {
    let p = quadratic(4, 2);
    let cfg = RuntimeConfig::new(1, StepPolicy::Fixed { gamma: 0.1 }, 200);
    let out = run_shared(&p, &x0(4), &cfg).unwrap();
    assert!(delay_stats(&out.trace).unwrap().iter().all(|s| s.mean == 0.0 && s.max == 0));
    assert_eq!(pilot_tau(&p, &x0(4), &cfg, 100).unwrap(), 1);
    let empty = MeasuredTrace { num_blocks: 2, records: vec![] };
    assert!(matches!(delay_stats(&empty), Err(Error::EmptyTrace)));
}

#[test]
fn wall_clock_budget_terminates() {
    let p = quadratic(4, 2);
    let mut cfg = RuntimeConfig::new(2, StepPolicy::Fixed { gamma: 0.1 }, 1);
    cfg.budget = Budget::WallClock { seconds: 0.05 };
    let out = run_shared(&p, &x0(4), &cfg).unwrap();
    assert!(!out.trace.is_empty());
    out.trace.validate().unwrap();
}

#[test]
fn measured_csv_round_trips() {
    let p = quadratic(4, 2);
    let cfg = RuntimeConfig::new(2, StepPolicy::Fixed { gamma: 0.1 }, 300);
    let out = run_shared(&p, &x0(4), &cfg).unwrap();
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let header = String::from_utf8(buf.clone()).unwrap();
    assert!(header.starts_with("k,i_k,j_max,j_vec,t_read,t_complete,worker,t_wall_read,t_wall_write"));
    let back = MeasuredTrace::read_csv(&buf[..], 2).unwrap();
    assert_eq!(back.event_trace(), out.trace.event_trace());
}

/// Half-norm objective that panics once it has served `limit` gradients.
#[derive(Debug)]
struct Fragile {
    calls: AtomicUsize,
    limit: usize,
}

impl Objective for Fragile {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn partial_gradient(&self, x: &[f64], range: Range<usize>, out: &mut [f64]) {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            panic!("injected failure");
        }
        out.copy_from_slice(&x[range]);
    }
}

#[test]
fn worker_panic_keeps_partial_trace() {
    let obj = Fragile { calls: AtomicUsize::new(0), limit: 50 };
    let p = ProblemInstance::new("fragile", Arc::new(obj), BlockPartition::contiguous(2, 2).unwrap(), 1.0, ConvexityClass::Convex).unwrap();
    let cfg = RuntimeConfig::new(2, StepPolicy::Fixed { gamma: 0.1 }, 1000);
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let err = run_shared(&p, &[1.0, 1.0], &cfg).unwrap_err();
    std::panic::set_hook(prev);
    match err {
        Error::WorkerPanic { completed, partial, message, .. } => {
            assert_eq!(completed, 50);
            assert_eq!(partial.len(), 50);
            assert!(message.contains("injected"));
            partial.validate().unwrap();
        }
        other => panic!("unexpected {other:?}"),
    }
}
