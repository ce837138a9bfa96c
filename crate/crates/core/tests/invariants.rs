//! Property tests for the invariants each module promises.

use asyncbcd::analysis::{epsilon_bounded, epsilon_unbounded, lyapunov_xi};
use asyncbcd::linalg;
use asyncbcd::objectives::{
    finite_difference_gradient, make_flat_convex, make_nonconvex_test, make_quadratic, random_spd, validate_lipschitz,
    BlockPartition, ProblemInstance,
};
use asyncbcd::schedule::{inject_delays, tail_moments, BlockRule, BoundedLaw, DelaySpec, TailLaw, DEFAULT_TAIL_TOL};
use asyncbcd::solver::{d_sequence, gamma_bounded, gamma_stochastic_unbounded, run, EpsilonSpec, RunOptions, StepPolicy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quadratic(dim: usize, blocks: usize, seed: u64) -> ProblemInstance {
    let q = random_spd(dim, 0.1, 5.0, seed);
    let b = (0..dim).map(|i| (i as f64 * 0.7).sin()).collect();
    make_quadratic(q, b, BlockPartition::contiguous(dim, blocks).unwrap()).unwrap()
}

fn problem(kind: u8, dim: usize, blocks: usize, seed: u64) -> ProblemInstance {
    match kind % 3 {
        0 => quadratic(dim, blocks, seed),
        1 => make_flat_convex(dim, blocks).unwrap(),
        _ => make_nonconvex_test(dim, blocks).unwrap(),
    }
}

fn point(dim: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| scale * (2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn block_gradients_match_finite_differences(kind in 0u8..3, dim in 2usize..9, seed in 0u64..1000) {
        let blocks = 1 + (seed as usize) % dim;
        let p = problem(kind, dim, blocks, seed);
        let x = point(dim, seed ^ 0xabc, 1.5);
        let fd = finite_difference_gradient(&p, &x).unwrap();
        let mut g = Vec::new();
        for b in 0..p.num_blocks() {
            g.extend(p.grad_block(&x, b).unwrap());
        }
        let err = linalg::dist(&g, &fd);
        prop_assert!(err <= 1e-5 * (1.0 + linalg::norm(&g)), "error {err}");
    }

    #[test]
    fn declared_lipschitz_dominates(kind in 0u8..3, dim in 2usize..9, seed in 0u64..1000) {
        let p = problem(kind, dim, 1, seed);
        let rep = validate_lipschitz(&p, 200, 3.0, seed).unwrap();
        prop_assert!(rep.pass, "max ratio {} > L {}", rep.max_ratio, p.lipschitz());
    }

    #[test]
    fn value_never_below_known_minimum(kind in 0u8..2, dim in 2usize..9, seed in 0u64..1000) {
        let p = problem(kind, dim, 1, seed);
        let x = point(dim, seed, 4.0);
        let min_f = p.optimal_value().unwrap();
        prop_assert!(p.eval(&x).unwrap() >= min_f - 1e-12 * (1.0 + min_f.abs()));
    }

    #[test]
    fn injected_bounded_traces_respect_tau(n in 1usize..6, tau in 0usize..8, seed in 0u64..1000, max_law in any::<bool>()) {
        let law = if max_law { BoundedLaw::Max } else { BoundedLaw::Uniform };
        let spec = DelaySpec::Bounded { tau, law };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = inject_delays(&BlockRule::uniform(), n, &spec, 300, &mut rng).unwrap();
        t.validate().unwrap();
        prop_assert_eq!(t.len(), 300);
        for r in &t.records {
            prop_assert!(r.j_max() <= tau.min(r.k));
            prop_assert!(r.block < n);
        }
    }

    #[test]
    fn geometric_tail_moment_closed_form(q in 0.05f64..0.8) {
        let m = tail_moments(&TailLaw::Geometric { q }, DEFAULT_TAIL_TOL).unwrap();
        let want = 2.0 * q / ((1.0 - q) * (1.0 - q));
        prop_assert!((m.c0 - want).abs() <= 1e-8 * want.max(1.0), "c0 {} want {want}", m.c0);
        // s_l is a survival function and c_i sums the survival from i.
        prop_assert!(m.s.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(m.c.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bounded_epsilon_solves_its_quadratic(tau in 1usize..20, c in 0.01f64..0.99) {
        let gamma = gamma_bounded(tau, c).unwrap();
        prop_assert!(gamma > 0.0 && gamma < 2.0 / (2.0 * tau as f64 + 1.0));
        let eps = epsilon_bounded(gamma, tau).unwrap();
        let rhs = 1.0 + (1.0 / tau as f64) * (1.0 / gamma - 0.5);
        prop_assert!(eps > 0.0 && eps < 1.0);
        prop_assert!((eps + 1.0 / eps - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn unbounded_epsilon_solves_its_quadratic(c0 in 0.1f64..50.0, c in 0.01f64..0.99) {
        let gamma = gamma_stochastic_unbounded(c0, c).unwrap();
        let eps = epsilon_unbounded(gamma, c0).unwrap();
        let rhs = 1.0 / gamma - 0.5;
        prop_assert!(eps > 0.0 && eps < c0.sqrt());
        prop_assert!((0.5 * (eps + c0 / eps) - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn d_sequence_increases(j in 0usize..200) {
        let spec = EpsilonSpec::default();
        prop_assert!(d_sequence(&spec, j + 1).unwrap() > d_sequence(&spec, j).unwrap());
    }

    #[test]
    fn bounded_runs_keep_xi_descent(
        dim in 2usize..8,
        tau in 1usize..5,
        c in 0.1f64..0.95,
        seed in 0u64..1000,
    ) {
        let blocks = 1 + (seed as usize) % dim;
        let p = quadratic(dim, blocks, seed);
        let spec = DelaySpec::Bounded { tau, law: BoundedLaw::Uniform };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = inject_delays(&BlockRule::uniform(), blocks, &spec, 400, &mut rng).unwrap();
        let policy = StepPolicy::BoundedFixed { tau, c };
        let x0 = point(dim, seed, 2.0);
        // The run itself checks the delayed-read bound and the update identity.
        let rec = run(&p, &t, &policy, &x0, 400, &RunOptions::default()).unwrap();
        let eps = epsilon_bounded(policy.fixed_gamma().unwrap(), tau).unwrap();
        let rep = lyapunov_xi(&rec, tau, eps).unwrap();
        prop_assert!(rep.pathwise_pass, "min scaled slack {}", rep.min_scaled_slack);
    }

    #[test]
    fn synchronous_runs_are_monotone(kind in 0u8..3, dim in 2usize..8, seed in 0u64..1000) {
        let p = problem(kind, dim, dim, seed);
        let spec = DelaySpec::Bounded { tau: 0, law: BoundedLaw::Max };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = inject_delays(&BlockRule::Cyclic, dim, &spec, 200, &mut rng).unwrap();
        let x0 = point(dim, seed, 2.0);
        let rec = run(&p, &t, &StepPolicy::Fixed { gamma: 0.9 }, &x0, 200, &RunOptions::default()).unwrap();
        let f = rec.f_series();
        prop_assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs())));
    }
}
