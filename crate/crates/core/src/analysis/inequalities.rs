//! Randomized checks of the elementary inequalities the descent proofs rely
//! on: weighted Young, Cauchy–Schwarz, `‖Σ x^i‖² ≤ MΣ‖x^i‖²`, and the
//! telescoping bound on the delayed-read error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm, norm_sq};

/// Outcome of one inequality over many random instances. `worst_margin` is
/// `min (rhs − lhs)/(1 + |rhs|)`; a violation is a margin below `−1e-12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityStat {
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

impl InequalityStat {
    fn new() -> Self {
        Self {
            trials: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        let m = (rhs - lhs) / (1.0 + rhs.abs());
        self.trials += 1;
        self.worst_margin = self.worst_margin.min(m);
        if m < -1e-12 {
            self.violations += 1;
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0 && self.trials > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub young: InequalityStat,
    pub cauchy_schwarz: InequalityStat,
    pub sum_of_squares: InequalityStat,
    pub telescoping: InequalityStat,
}

impl AppendixReport {
    pub fn pass(&self) -> bool {
        self.young.pass() && self.cauchy_schwarz.pass() && self.sum_of_squares.pass() && self.telescoping.pass()
    }
}

fn gaussian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Checks each inequality on `trials` random instances of varying dimension
/// and scale.
pub fn check_appendix_inequalities(trials: usize, seed: u64) -> AppendixReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut young = InequalityStat::new();
    let mut cs = InequalityStat::new();
    let mut sos = InequalityStat::new();
    let mut tele = InequalityStat::new();
    for _ in 0..trials {
        let n = rng.random_range(1..=12);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let x1 = gaussian(&mut rng, n, scale);
        let x2 = gaussian(&mut rng, n, scale);
        let eps = 10f64.powf(rng.random_range(-3.0..3.0));
        young.record(dot(&x1, &x2), eps * norm_sq(&x1) + norm_sq(&x2) / eps);
        cs.record(dot(&x1, &x2), norm(&x1) * norm(&x2));

        let m = rng.random_range(1..=10);
        let xs: Vec<Vec<f64>> = (0..m).map(|_| gaussian(&mut rng, n, scale)).collect();
        let total: Vec<f64> = (0..n).map(|j| xs.iter().map(|x| x[j]).sum()).collect();
        sos.record(norm_sq(&total), m as f64 * xs.iter().map(|x| norm_sq(x)).sum::<f64>());

        // An iterate history where step i changes one random block, then a
        // random per-block delay vector with maximum j(k).
        let blocks = rng.random_range(1..=4).min(n);
        let owner: Vec<usize> = (0..n).map(|j| j * blocks / n).collect();
        let k = rng.random_range(1..=15);
        let mut hist = vec![gaussian(&mut rng, n, scale)];
        for _ in 0..k {
            let b = rng.random_range(0..blocks);
            let mut next = hist.last().expect("nonempty").clone();
            for j in 0..n {
                if owner[j] == b {
                    next[j] += scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            hist.push(next);
        }
        let delays: Vec<usize> = (0..blocks).map(|_| rng.random_range(0..=k)).collect();
        let jk = *delays.iter().max().expect("at least one block");
        let x_hat: Vec<f64> = (0..n).map(|j| hist[k - delays[owner[j]]][j]).collect();
        let d: Vec<f64> = hist[k].iter().zip(&x_hat).map(|(a, b)| a - b).collect();
        let bound: f64 = (k - jk..k)
            .map(|i| {
                let step: Vec<f64> = hist[i + 1].iter().zip(&hist[i]).map(|(a, b)| a - b).collect();
                norm(&step)
            })
            .sum();
        tele.record(norm(&d), bound);
    }
    AppendixReport {
        young,
        cauchy_schwarz: cs,
        sum_of_squares: sos,
        telescoping: tele,
    }
}
