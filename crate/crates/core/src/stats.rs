//! Seeded random streams, Monte Carlo estimates and the few tests the
//! verification suites need.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

/// Worker count used when none is configured. Results depend on it, so it
/// is fixed rather than taken from the machine.
pub const DEFAULT_WORKERS: usize = 8;

/// Two-sided 1% normal quantile.
pub const Z_1PCT: f64 = 2.5758293035489004;

/// Stream tags separating consumers of a shared seed.
pub mod tags {
    pub const DA_MOMENT: u32 = 1;
    pub const DA_SAMPLE: u32 = 2;
    pub const DA_REJECTION: u32 = 3;
    pub const SDE: u32 = 10;
    pub const PIPELINE_LHS: u32 = 11;
    pub const PIPELINE_RHS: u32 = 12;
    pub const RMT_CORNER: u32 = 20;
    pub const RMT_DBM: u32 = 21;
    pub const HAAR: u32 = 22;
}

/// Independent stream for `(seed, worker)`; `tag` separates unrelated
/// consumers sharing a seed.
pub fn stream(seed: u64, tag: u32, worker: u32) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 32) | worker as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Estimate { mean, std_error: 0.0, n: 0 }
    }

    /// `(mean − reference)/SE`. Differences at round-off level relative to
    /// the compared values give 0 (antithetic pairs can make an estimator
    /// exact, with an SE that is pure round-off); otherwise a zero SE gives
    /// ±∞.
    pub fn z_against(&self, reference: f64) -> f64 {
        z_ratio(self.mean - reference, self.std_error, self.mean.abs().max(reference.abs()))
    }

    /// Two-sample z-score for independent estimates.
    pub fn z_between(&self, other: &Estimate) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        z_ratio(self.mean - other.mean, se, self.mean.abs().max(other.mean.abs()))
    }
}

fn z_ratio(diff: f64, se: f64, scale: f64) -> f64 {
    if diff.abs() <= 1e-12 * scale.max(1.0) {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n > 1 { (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt() } else { 0.0 };
        Estimate { mean: self.mean, std_error: se, n: self.n }
    }
}

/// Split `n` items over `workers` chunks; chunk `w` gets its own stream and
/// returns one value. Outputs are in worker order, so the result depends
/// only on `(seed, tag, workers)`.
pub fn par_chunks<T, F>(n: usize, workers: usize, seed: u64, tag: u32, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Rng) -> T + Sync,
{
    let workers = workers.max(1);
    (0..workers)
        .into_par_iter()
        .map(|w| {
            let len = n / workers + usize::from(w < n % workers);
            let mut rng = stream(seed, tag, w as u32);
            f(len, &mut rng)
        })
        .collect()
}

/// Vector-valued Monte Carlo: `draw` is called `n` times (split over
/// workers) and each statistic is accumulated separately.
pub fn mc_vector<F>(n: usize, dim: usize, workers: usize, seed: u64, tag: u32, draw: F) -> Vec<Estimate>
where
    F: Fn(&mut Rng, &mut [f64]) + Sync,
{
    let parts = par_chunks(n, workers, seed, tag, |len, rng| {
        let mut acc = vec![Accumulator::default(); dim];
        let mut buf = vec![0.0; dim];
        for _ in 0..len {
            draw(rng, &mut buf);
            for (a, &x) in acc.iter_mut().zip(&buf) {
                a.push(x);
            }
        }
        acc
    });
    let mut total = vec![Accumulator::default(); dim];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total.iter().map(Accumulator::estimate).collect()
}

/// One-sample Kolmogorov–Smirnov statistic of `samples` (sorted in place)
/// against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Asymptotic critical value of the one-sample KS statistic at level 1%.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}
