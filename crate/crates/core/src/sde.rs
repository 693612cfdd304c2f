//! Time stepping for β-Dyson Brownian motion
//!
//! ```text
//! dX_i = (β/2) Σ_{j≠i} 1/(X_i − X_j) dt + dB_i
//! ```
//!
//! and the Dyson Ornstein–Uhlenbeck process (extra drift `−X_i/2`), with
//! antithetic Monte Carlo estimators and the two pipelines of the
//! intertwining diagram.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dixon_anderson::{DaSampler, OrderedVector};
use crate::error::{Error, Result};
use crate::jack::{build_jack, JackParams};
use crate::operators::GeneratorKind;
use crate::partitions::Partition;
use crate::stats::{par_chunks, tags, Accumulator, Estimate, Rng, DEFAULT_WORKERS};
use crate::symmpoly::CompiledPoly;

#[inline]
fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Process selector; shares the DBM/DOU naming of the generators.
pub type Process = GeneratorKind;

/// Guard refinement depth and threshold factor: a step leaving a gap below
/// `GUARD_FACTOR·√dt` is redone as four bridged sub-steps, recursively.
pub const GUARD_LEVELS: u32 = 4;
pub const GUARD_FACTOR: f64 = 1e-3;
/// Maximum number of dt halvings after a non-finite step.
pub const MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Drift-implicit Euler: `Y = sort(X + ΔB) + dt·D(Y)` solved inside the
    /// ordered chamber. `Y` minimizes the strictly convex
    /// `½‖Y‖²(1 + dt/2 for DOU) − Z·Y − dt(β/2) Σ_{i<j} log(Y_j − Y_i)`, so
    /// the step never leaves the chamber and the repulsion cannot blow up
    /// on near-collisions. This is the default.
    Implicit,
    /// Euler–Maruyama, then sort.
    EulerSorted,
    /// Euler–Maruyama, then reflect crossed neighbours back through each
    /// other until ordered.
    EulerReflect,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit" => Ok(Scheme::Implicit),
            "euler_sorted" | "sorted" => Ok(Scheme::EulerSorted),
            "euler_reflect" | "reflect" => Ok(Scheme::EulerReflect),
            other => Err(Error::Config(format!("unknown scheme '{other}' (implicit|euler_sorted|euler_reflect)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub beta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub paths: usize,
    pub seed: u64,
    pub workers: usize,
    /// Near-collision refinement for the explicit schemes.
    pub guard: bool,
    /// Halve `dt` and rerun a path after a non-finite step.
    pub retry_nonfinite: bool,
}

impl SdeConfig {
    /// Defaults: `dt = 1e−3·t`, 10^5 paths, guard on.
    pub fn new(beta: f64, t_final: f64, seed: u64) -> Self {
        SdeConfig {
            beta,
            dt: 1e-3 * t_final.max(f64::MIN_POSITIVE),
            t_final,
            scheme: Scheme::Implicit,
            paths: 100_000,
            seed,
            workers: DEFAULT_WORKERS,
            guard: true,
            retry_nonfinite: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t must be nonnegative, got {}", self.t_final)));
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.beta / 2.0
    }

    /// Step count and the step actually used (`t_final` is hit exactly).
    pub fn steps(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_final / self.dt).round().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

/// One particle system being advanced by the Euler scheme.
struct Stepper {
    half_beta: f64,
    ou: bool,
    scheme: Scheme,
    guard_gap: Option<f64>,
}

impl Stepper {
    fn new(process: Process, cfg: &SdeConfig, dt: f64) -> Self {
        Stepper {
            half_beta: 0.5 * cfg.beta,
            ou: process == Process::Dou,
            scheme: cfg.scheme,
            guard_gap: cfg.guard.then(|| GUARD_FACTOR * dt.sqrt()),
        }
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|d| *d = 0.0);
        let k = x.len();
        for i in 0..k {
            for j in i + 1..k {
                let r = self.half_beta / (x[i] - x[j]);
                out[i] += r;
                out[j] -= r;
            }
            if self.ou {
                out[i] -= 0.5 * x[i];
            }
        }
    }

    fn repair(&self, y: &mut [f64]) {
        match self.scheme {
            Scheme::EulerSorted | Scheme::Implicit => y.sort_unstable_by(f64::total_cmp),
            Scheme::EulerReflect => {
                // odd–even transposition: each swap reflects a crossed pair
                // through its midpoint
                let mut swapped = true;
                while swapped {
                    swapped = false;
                    for i in 0..y.len().saturating_sub(1) {
                        if y[i] > y[i + 1] {
                            y.swap(i, i + 1);
                            swapped = true;
                        }
                    }
                }
            }
        }
    }

    /// Advance `x` by one step of size `dt` driven by Brownian increment
    /// `db`; returns false if the state became non-finite.
    fn advance(&self, x: &mut [f64], dt: f64, db: &[f64], level: u32, rng: &mut Rng, drift: &mut [f64]) -> bool {
        if self.scheme == Scheme::Implicit {
            return self.implicit_step(x, dt, db, drift);
        }
        let k = x.len();
        self.drift(x, drift);
        let mut y: smallvec_like::Buf = smallvec_like::Buf::new(k);
        for i in 0..k {
            y[i] = x[i] + drift[i] * dt + db[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.repair(&mut y);
        if let Some(delta) = self.guard_gap {
            if level < GUARD_LEVELS && y.windows(2).any(|w| w[1] - w[0] < delta) {
                // redo as four sub-steps whose increments sum to db:
                // Z_m − (ΣZ − db)/4 has the bridge law given the sum
                let sub = 0.25 * dt;
                let sd = sub.sqrt();
                let mut z = vec![0.0; 4 * k];
                for v in z.iter_mut() {
                    *v = sd * normal(rng);
                }
                for i in 0..k {
                    let corr = 0.25 * (z[i] + z[k + i] + z[2 * k + i] + z[3 * k + i] - db[i]);
                    for m in 0..4 {
                        z[m * k + i] -= corr;
                    }
                }
                for m in 0..4 {
                    if !self.advance(x, sub, &z[m * k..(m + 1) * k], level + 1, rng, drift) {
                        return false;
                    }
                }
                return true;
            }
        }
        x.copy_from_slice(&y);
        true
    }
}

impl Stepper {
    /// Damped Newton on the convex step objective (self-concordant after
    /// division by `dt·β/2`).
    fn implicit_step(&self, x: &mut [f64], dt: f64, db: &[f64], drift: &mut [f64]) -> bool {
        // fixed sizes let the small cases unroll and stay on the stack
        match x.len() {
            1 => self.implicit_fixed::<1>(x, dt, db, drift),
            2 => self.implicit_fixed::<2>(x, dt, db, drift),
            3 => self.implicit_fixed::<3>(x, dt, db, drift),
            4 => self.implicit_fixed::<4>(x, dt, db, drift),
            5 => self.implicit_fixed::<5>(x, dt, db, drift),
            6 => self.implicit_fixed::<6>(x, dt, db, drift),
            k => {
                let mut s = vec![0.0; 4 * k + k * k];
                let (z, rest) = s.split_at_mut(k);
                let (y, rest) = rest.split_at_mut(k);
                let (grad, rest) = rest.split_at_mut(k);
                let (step, hess) = rest.split_at_mut(k);
                self.implicit_core(x, dt, db, drift, z, y, grad, step, hess)
            }
        }
    }

    fn implicit_fixed<const K: usize>(&self, x: &mut [f64], dt: f64, db: &[f64], drift: &mut [f64]) -> bool {
        let mut z = [0.0; K];
        let mut y = [0.0; K];
        let mut grad = [0.0; K];
        let mut step = [0.0; K];
        let mut hess = [[0.0; K]; K];
        let x: &mut [f64; K] = x.try_into().expect("state length");
        let drift: &mut [f64; K] = drift.try_into().expect("drift length");
        let db: &[f64; K] = db.try_into().expect("increment length");
        self.implicit_core(x, dt, db, drift, &mut z, &mut y, &mut grad, &mut step, hess.as_flattened_mut())
    }

    /// Drift-implicit step: `y = sort(x + db) + dt·D(y)`, found as the
    /// minimiser of a strictly convex barrier function by damped Newton.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn implicit_core(
        &self,
        x: &mut [f64],
        dt: f64,
        db: &[f64],
        drift: &mut [f64],
        z: &mut [f64],
        y: &mut [f64],
        grad: &mut [f64],
        step: &mut [f64],
        hess: &mut [f64],
    ) -> bool {
        let k = x.len();
        let a = if self.ou { 1.0 + 0.5 * dt } else { 1.0 };
        let g = dt * self.half_beta;
        for i in 0..k {
            z[i] = x[i] + db[i];
        }
        if z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        z.sort_unstable_by(f64::total_cmp);
        if k == 1 {
            x[0] = z[0] / a;
            return true;
        }
        y.copy_from_slice(z);
        let root_g = g.sqrt();
        if z.windows(2).all(|w| w[1] - w[0] >= WARM_GAP * root_g) {
            // well separated: one fixed-point sweep lands within O(dt²)
            self.drift(z, drift);
            for i in 0..k {
                let d = if self.ou { drift[i] + 0.5 * z[i] } else { drift[i] };
                y[i] = z[i] + dt * d;
                if self.ou {
                    y[i] /= a;
                }
            }
        }
        // otherwise start from the noise-only point, pushed apart to the
        // natural repulsion scale √(dt β/2)
        let eps = 0.5 * root_g;
        for i in 1..k {
            if !(y[i] - y[i - 1] >= eps) {
                y[i] = y[i - 1] + eps;
            }
        }
        for _ in 0..IMPLICIT_MAX_ITER {
            hess.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k {
                grad[i] = a * y[i] - z[i];
                hess[i * k + i] = a;
            }
            for i in 0..k {
                for j in i + 1..k {
                    let r = 1.0 / (y[j] - y[i]);
                    grad[i] += g * r;
                    grad[j] -= g * r;
                    let w = g * r * r;
                    hess[i * k + i] += w;
                    hess[j * k + j] += w;
                    hess[i * k + j] -= w;
                    hess[j * k + i] -= w;
                }
            }
            step.copy_from_slice(grad);
            if !solve_spd(hess, k, step) {
                return false;
            }
            let lambda2 = grad.iter().zip(step.iter()).map(|(p, q)| p * q).sum::<f64>() / g;
            let mut t = if lambda2 > 1.0 / 16.0 { 1.0 / (1.0 + lambda2.sqrt()) } else { 1.0 };
            // in the quadratic region the decrement after a full step is at
            // most about λ², so λ² < 1e−8 leaves a position error below
            // about 1e−8·√(dt β/2)
            let done = lambda2 < 1e-8;
            loop {
                let ok = (1..k).all(|i| y[i] - t * step[i] > y[i - 1] - t * step[i - 1]);
                if ok {
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return false;
                }
            }
            for i in 0..k {
                y[i] -= t * step[i];
            }
            if done {
                x.copy_from_slice(y);
                return y.iter().all(|v| v.is_finite());
            }
        }
        false
    }
}

const IMPLICIT_MAX_ITER: usize = 60;
/// Minimum gap, in units of `√(dt β/2)`, for the fixed-point warm start.
const WARM_GAP: f64 = 8.0;

/// In-place Cholesky solve of the `k×k` SPD system `h · v = rhs`.
#[inline(always)]
fn solve_spd(h: &mut [f64], k: usize, rhs: &mut [f64]) -> bool {
    for j in 0..k {
        let mut d = h[j * k + j];
        for p in 0..j {
            d -= h[j * k + p] * h[j * k + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        h[j * k + j] = d;
        for i in j + 1..k {
            let mut s = h[i * k + j];
            for p in 0..j {
                s -= h[i * k + p] * h[j * k + p];
            }
            h[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= h[i * k + p] * rhs[p];
        }
        rhs[i] = s / h[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= h[p * k + i] * rhs[p];
        }
        rhs[i] = s / h[i * k + i];
    }
    true
}

/// Fixed-capacity scratch to keep the step loop allocation-free for the
/// small dimensions used here.
mod smallvec_like {
    use std::ops::{Deref, DerefMut};

    const CAP: usize = 16;

    pub enum Buf {
        Inline([f64; CAP], usize),
        Heap(Vec<f64>),
    }

    impl Buf {
        pub fn new(n: usize) -> Self {
            if n <= CAP {
                Buf::Inline([0.0; CAP], n)
            } else {
                Buf::Heap(vec![0.0; n])
            }
        }
    }

    impl Deref for Buf {
        type Target = [f64];
        fn deref(&self) -> &[f64] {
            match self {
                Buf::Inline(a, n) => &a[..*n],
                Buf::Heap(v) => v,
            }
        }
    }

    impl DerefMut for Buf {
        fn deref_mut(&mut self) -> &mut [f64] {
            match self {
                Buf::Inline(a, n) => &mut a[..*n],
                Buf::Heap(v) => v,
            }
        }
    }
}

/// Quantiles `F^{-1}((r + ½)/m)` of the semicircle law on `[−2, 2]`.
pub fn semicircle_quantiles(m: usize) -> Vec<f64> {
    let cdf = |x: f64| 0.5 + x * (4.0 - x * x).max(0.0).sqrt() / (4.0 * std::f64::consts::PI) + (x / 2.0).asin() / std::f64::consts::PI;
    let q: Vec<f64> = (0..m)
        .map(|r| {
            let p = (r as f64 + 0.5) / m as f64;
            let (mut lo, mut hi) = (-2.0, 2.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    (0..m).map(|r| 0.5 * (q[r] - q[m - 1 - r])).collect()
}

/// Splits ties in a starting configuration: each run of `m` equal values
/// is fanned out to `v + √dt·q_r` with `q` the semicircle quantiles.
/// Untied inputs are returned unchanged.
pub fn split_ties(x0: &[f64], dt: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut start = 0;
    while start < x.len() {
        let mut end = start + 1;
        while end < x.len() && x0[end] == x0[start] {
            end += 1;
        }
        if end - start > 1 {
            for (v, q) in x[start..end].iter_mut().zip(semicircle_quantiles(end - start)) {
                *v += dt.sqrt() * q;
            }
        }
        start = end;
    }
    x.sort_unstable_by(f64::total_cmp);
    x
}

/// One path from `x0` to `t_final`, halving `dt` after a non-finite step
/// if the config allows.
fn run_single(
    process: Process,
    cfg: &SdeConfig,
    x0: &[f64],
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let (steps, dt) = cfg.steps();
    let mut dt = dt;
    let mut steps = steps;
    for attempt in 0..=MAX_RETRIES {
        let stepper = Stepper::new(process, cfg, dt);
        let mut x = split_ties(x0, cfg.dt);
        let mut db = vec![0.0; x.len()];
        let mut drift = vec![0.0; x.len()];
        let sd = dt.sqrt();
        let mut failed_at = None;
        for s in 0..steps {
            for v in db.iter_mut() {
                *v = sd * normal(rng);
            }
            if !stepper.advance(&mut x, dt, &db, 0, rng, &mut drift) {
                failed_at = Some(s);
                break;
            }
        }
        match failed_at {
            None => return Ok(x),
            Some(s) if !cfg.retry_nonfinite || attempt == MAX_RETRIES => return Err(Error::NonFinite(s)),
            Some(_) => {
                dt *= 0.5;
                steps *= 2;
            }
        }
    }
    unreachable!()
}

pub fn simulate(process: Process, x0: &OrderedVector, cfg: &SdeConfig, rng: &mut Rng) -> Result<OrderedVector> {
    cfg.validate()?;
    OrderedVector::new(run_single(process, cfg, x0.values(), rng)?)
}

pub fn simulate_dbm(x0: &OrderedVector, cfg: &SdeConfig, rng: &mut Rng) -> Result<OrderedVector> {
    simulate(Process::Dbm, x0, cfg, rng)
}

pub fn simulate_dou(y0: &OrderedVector, cfg: &SdeConfig, rng: &mut Rng) -> Result<OrderedVector> {
    simulate(Process::Dou, y0, cfg, rng)
}

/// Generic antithetic Monte Carlo over path pairs.
///
/// For each pair, `init` draws a starting point; both paths start there and
/// are driven by `±` the same Brownian increments (guard refinements draw
/// their own bridge noise per path). At each checkpoint `observe` gets the
/// checkpoint number and the path's `n_out` output buffer, zeroed at the
/// start of the path, so statistics may accumulate over checkpoints. The
/// pair average of the final buffers is one sample.
pub fn antithetic_mc<I, O>(
    process: Process,
    dim: usize,
    cfg: &SdeConfig,
    checkpoints: &[usize],
    n_out: usize,
    tag: u32,
    init: I,
    observe: O,
) -> Result<Vec<Estimate>>
where
    I: Fn(&mut Rng, &mut [f64]) -> Result<()> + Sync,
    O: Fn(usize, &[f64], &mut Rng, &mut [f64]) -> Result<()> + Sync,
{
    cfg.validate()?;
    let (steps, dt0) = cfg.steps();
    if let Some(&c) = checkpoints.iter().find(|&&c| c > steps) {
        return Err(Error::Config(format!("checkpoint step {c} beyond final step {steps}")));
    }
    let pairs = cfg.paths.div_ceil(2);
    let parts = par_chunks(pairs, cfg.workers, cfg.seed, tag, |len, rng| -> Result<Vec<Accumulator>> {
        let mut acc = vec![Accumulator::default(); n_out];
        let mut start = vec![0.0; dim];
        let mut outs = [vec![0.0; n_out], vec![0.0; n_out]];
        for _ in 0..len {
            init(rng, &mut start)?;
            let mut scale = 1usize;
            loop {
                match run_pair(process, cfg, &start, steps * scale, dt0 / scale as f64, scale, checkpoints, rng, &observe, &mut outs)? {
                    true => break,
                    false if cfg.retry_nonfinite && scale < 1 << MAX_RETRIES => scale *= 2,
                    false => return Err(Error::NonFinite(steps)),
                }
            }
            for (j, a) in acc.iter_mut().enumerate() {
                a.push(0.5 * (outs[0][j] + outs[1][j]));
            }
        }
        Ok(acc)
    });
    let mut total = vec![Accumulator::default(); n_out];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part?) {
            t.merge(&p);
        }
    }
    Ok(total.iter().map(Accumulator::estimate).collect())
}

/// Returns Ok(false) on a non-finite state.
#[allow(clippy::too_many_arguments)]
fn run_pair<O>(
    process: Process,
    cfg: &SdeConfig,
    start: &[f64],
    steps: usize,
    dt: f64,
    scale: usize,
    checkpoints: &[usize],
    rng: &mut Rng,
    observe: &O,
    outs: &mut [Vec<f64>; 2],
) -> Result<bool>
where
    O: Fn(usize, &[f64], &mut Rng, &mut [f64]) -> Result<()>,
{
    let stepper = Stepper::new(process, cfg, dt);
    let k = start.len();
    let mut xa = split_ties(start, cfg.dt);
    let mut xb = xa.clone();
    let mut db = vec![0.0; k];
    let mut neg = vec![0.0; k];
    let mut drift = vec![0.0; k];
    let sd = dt.sqrt();
    for o in outs.iter_mut() {
        o.iter_mut().for_each(|v| *v = 0.0);
    }
    let emit = |step: usize, xa: &[f64], xb: &[f64], rng: &mut Rng, outs: &mut [Vec<f64>; 2]| -> Result<()> {
        for (c, &cp) in checkpoints.iter().enumerate() {
            if cp * scale == step {
                let [oa, ob] = outs;
                observe(c, xa, rng, oa)?;
                observe(c, xb, rng, ob)?;
            }
        }
        Ok(())
    };
    emit(0, &xa, &xb, rng, outs)?;
    for s in 1..=steps {
        for i in 0..k {
            db[i] = sd * normal(rng);
            neg[i] = -db[i];
        }
        if !stepper.advance(&mut xa, dt, &db, 0, rng, &mut drift) || !stepper.advance(&mut xb, dt, &neg, 0, rng, &mut drift) {
            return Ok(false);
        }
        emit(s, &xa, &xb, rng, outs)?;
    }
    Ok(true)
}

/// A symmetric statistic of a particle configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Statistic {
    P1,
    P2,
    P1Sq,
    Jack(Partition),
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Statistic::P1 => write!(f, "p1"),
            Statistic::P2 => write!(f, "p2"),
            Statistic::P1Sq => write!(f, "p1^2"),
            Statistic::Jack(k) => write!(f, "jack:{}", k.parts().iter().map(u32::to_string).collect::<Vec<_>>().join(",")),
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "p1" => Ok(Statistic::P1),
            "p2" => Ok(Statistic::P2),
            "p1^2" | "p1sq" => Ok(Statistic::P1Sq),
            other => match other.strip_prefix("jack:") {
                Some(rest) => Ok(Statistic::Jack(rest.parse()?)),
                None => Err(Error::Config(format!("unknown statistic '{other}' (p1|p2|p1sq|jack:κ)"))),
            },
        }
    }
}

impl From<Statistic> for String {
    fn from(s: Statistic) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Statistic {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Parses a list such as `p1,p2,jack:2,1`: a `jack:` entry absorbs the
/// following purely numeric fields as its parts.
pub fn parse_statistics(s: &str) -> Result<Vec<Statistic>> {
    let mut out: Vec<String> = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match out.last_mut() {
            Some(last) if last.starts_with("jack:") && tok.chars().all(|c| c.is_ascii_digit()) => {
                last.push(',');
                last.push_str(tok);
            }
            _ => out.push(tok.to_string()),
        }
    }
    out.iter().map(|t| t.parse()).collect()
}

/// Statistics compiled for `k` variables at a fixed `θ`.
pub struct StatSet {
    stats: Vec<Statistic>,
    jacks: Vec<Option<CompiledPoly>>,
}

impl StatSet {
    pub fn new(stats: &[Statistic], theta: f64, k: usize) -> Result<Self> {
        let params = JackParams::new(theta, k)?;
        let jacks = stats
            .iter()
            .map(|s| match s {
                Statistic::Jack(kappa) => {
                    params.check_len(kappa)?;
                    Ok(Some(build_jack(&params, kappa)?.compile()))
                }
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(StatSet { stats: stats.to_vec(), jacks })
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.stats.iter().map(Statistic::to_string).collect()
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for ((s, j), o) in self.stats.iter().zip(&self.jacks).zip(out.iter_mut()) {
            *o = match s {
                Statistic::P1 => x.iter().sum(),
                Statistic::P2 => x.iter().map(|v| v * v).sum(),
                Statistic::P1Sq => x.iter().sum::<f64>().powi(2),
                Statistic::Jack(_) => j.as_ref().unwrap().eval(x),
            };
        }
    }
}

/// Endpoint statistics at `t_final` from a fixed start.
pub fn mc_statistics(process: Process, x0: &OrderedVector, cfg: &SdeConfig, stats: &StatSet) -> Result<Vec<Estimate>> {
    let (steps, _) = cfg.steps();
    let start = x0.values();
    antithetic_mc(
        process,
        x0.dim(),
        cfg,
        &[steps],
        stats.len(),
        tags::SDE,
        |_, s| {
            s.copy_from_slice(start);
            Ok(())
        },
        |_, x, _, out| {
            stats.eval(x, out);
            Ok(())
        },
    )
}

/// `E[J_κ(state at t_final)]` with `θ = β/2`.
pub fn mc_jack_moment(process: Process, x0: &OrderedVector, cfg: &SdeConfig, kappa: &Partition) -> Result<Estimate> {
    let params = JackParams::new(cfg.theta(), x0.dim())?;
    params.check_len(kappa)?;
    if kappa.is_empty() {
        return Ok(Estimate::exact(1.0));
    }
    let stats = StatSet::new(&[Statistic::Jack(kappa.clone())], cfg.theta(), x0.dim())?;
    Ok(mc_statistics(process, x0, cfg, &stats)?[0])
}

/// Squared-Bessel dimension `β k(k−1)/2 + k` of `‖X‖²`.
pub fn bessel_dimension(beta: f64, k: usize) -> f64 {
    beta * (k * (k - 1)) as f64 / 2.0 + k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub times: Vec<f64>,
    /// `E‖X(t)‖² − ‖x0‖²` at each grid time.
    pub increments: Vec<Estimate>,
    /// Least-squares slope through the origin, estimated per path.
    pub slope: Estimate,
    pub expected: f64,
}

/// Regresses `‖X(t)‖² − ‖x0‖²` on `t` over `grid` (times in `(0, t_final]`)
/// along each DBM path; the per-path slope `Σ t_g Δ_g / Σ t_g²` has mean
/// equal to the squared-Bessel dimension.
pub fn squared_radius_slope(x0: &OrderedVector, cfg: &SdeConfig, grid: &[f64]) -> Result<SlopeReport> {
    let (steps, dt) = cfg.steps();
    let cps: Vec<usize> = grid.iter().map(|t| (t / dt).round() as usize).collect();
    let times: Vec<f64> = cps.iter().map(|&c| c as f64 * dt).collect();
    if cps.iter().any(|&c| c == 0 || c > steps) {
        return Err(Error::Config("grid times must lie in (0, t_final]".into()));
    }
    let r0: f64 = x0.values().iter().map(|v| v * v).sum();
    let denom: f64 = times.iter().map(|t| t * t).sum();
    let n = cps.len();
    let start = x0.values();
    let est = antithetic_mc(
        Process::Dbm,
        x0.dim(),
        cfg,
        &cps,
        n + 1,
        tags::SDE,
        |_, s| {
            s.copy_from_slice(start);
            Ok(())
        },
        |c, x, _, out| {
            let inc = x.iter().map(|v| v * v).sum::<f64>() - r0;
            out[c] = inc;
            out[n] += times[c] * inc / denom;
            Ok(())
        },
    )?;
    Ok(SlopeReport {
        times,
        increments: est[..n].to_vec(),
        slope: est[n],
        expected: bessel_dimension(cfg.beta, x0.dim()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub times: Vec<f64>,
    /// `E‖Y(t)‖²` at each grid time.
    pub estimates: Vec<Estimate>,
    /// `δ + (‖y0‖² − δ) e^{−t}`, δ the squared-Bessel dimension.
    pub expected: Vec<f64>,
}

impl RelaxationReport {
    pub fn z_scores(&self) -> Vec<f64> {
        self.estimates.iter().zip(&self.expected).map(|(e, &r)| e.z_against(r)).collect()
    }
}

/// Mean-square relaxation of the DOU process towards its stationary value.
pub fn mean_square_relaxation(y0: &OrderedVector, cfg: &SdeConfig, grid: &[f64]) -> Result<RelaxationReport> {
    let (steps, dt) = cfg.steps();
    let cps: Vec<usize> = grid.iter().map(|t| (t / dt).round() as usize).collect();
    if cps.iter().any(|&c| c == 0 || c > steps) {
        return Err(Error::Config("grid times must lie in (0, t_final]".into()));
    }
    let times: Vec<f64> = cps.iter().map(|&c| c as f64 * dt).collect();
    let r0: f64 = y0.values().iter().map(|v| v * v).sum();
    let delta = bessel_dimension(cfg.beta, y0.dim());
    let start = y0.values();
    let estimates = antithetic_mc(
        Process::Dou,
        y0.dim(),
        cfg,
        &cps,
        cps.len(),
        tags::SDE,
        |_, s| {
            s.copy_from_slice(start);
            Ok(())
        },
        |c, y, _, out| {
            out[c] = y.iter().map(|v| v * v).sum();
            Ok(())
        },
    )?;
    let expected = times.iter().map(|t| delta + (r0 - delta) * (-t).exp()).collect();
    Ok(RelaxationReport { times, estimates, expected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStat {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub process: Process,
    pub beta: f64,
    pub k: usize,
    pub t: f64,
    pub x_top: OrderedVector,
    pub stats: Vec<PipelineStat>,
}

impl PipelineReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }
}

/// Statistics recorded by the pipelines by default: `p_1, p_2, p_1², J_(2)`.
pub fn default_pipeline_stats() -> Vec<Statistic> {
    vec![Statistic::P1, Statistic::P2, Statistic::P1Sq, Statistic::Jack(Partition::new(vec![2]).unwrap())]
}

/// Relative spacing used to separate an accidental tie in an endpoint
/// before sampling the kernel there.
pub const TIE_JITTER: f64 = 1e-9;

/// Both paths of the intertwining diagram from `x_top` (dimension `k+1`):
///
/// * LHS: `x ~ Λ^(k)(x_top, ·)`, then the k-particle process to time `t`;
/// * RHS: the (k+1)-particle process from `x_top` to time `t`, then
///   `Λ^(k)` at the endpoint.
///
/// Each side uses its own random streams; z-scores are two-sample.
pub fn mc_intertwining(
    process: Process,
    x_top: &OrderedVector,
    cfg: &SdeConfig,
    stats: &[Statistic],
    t: f64,
) -> Result<PipelineReport> {
    x_top.require_strict()?;
    let k = x_top.dim() - 1;
    if k == 0 {
        return Err(Error::Config("top level needs at least two points".into()));
    }
    let cfg = SdeConfig { t_final: t, ..cfg.clone() };
    cfg.validate()?;
    let set = StatSet::new(stats, cfg.theta(), k)?;
    let sampler = DaSampler::new(cfg.theta())?;
    let (steps, _) = cfg.steps();
    let top = x_top.values();
    let record = |_: usize, x: &[f64], _: &mut Rng, out: &mut [f64]| {
        set.eval(x, out);
        Ok(())
    };
    let lhs = antithetic_mc(
        process,
        k,
        &cfg,
        &[steps],
        set.len(),
        tags::PIPELINE_LHS,
        |rng, start| {
            let mut w = vec![0.0; k + 1];
            sampler.sample_into(top, rng, &mut w, start)
        },
        record,
    )?;
    let rhs = antithetic_mc(
        process,
        k + 1,
        &cfg,
        &[steps],
        set.len(),
        tags::PIPELINE_RHS,
        |_, start| {
            start.copy_from_slice(top);
            Ok(())
        },
        |_, y, rng, out| {
            let mut end = OrderedVector::new(y.to_vec())?;
            if end.require_strict().is_err() {
                let scale = y[k] - y[0];
                end = end.separate_ties(TIE_JITTER * scale.max(1.0));
            }
            let mut w = vec![0.0; k + 1];
            let mut x = vec![0.0; k];
            sampler.sample_into(end.values(), rng, &mut w, &mut x)?;
            set.eval(&x, out);
            Ok(())
        },
    )?;
    let stats = set
        .names()
        .into_iter()
        .zip(lhs.iter().zip(&rhs))
        .map(|(name, (l, r))| PipelineStat { name, lhs: *l, rhs: *r, z: l.z_between(r) })
        .collect();
    Ok(PipelineReport { process, beta: cfg.beta, k, t, x_top: x_top.clone(), stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::part;
    use crate::semigroup::{semigroup_apply, SemigroupAction};
    use crate::jack::JackBasis;
    use crate::stats::stream;

    fn ov(v: &[f64]) -> OrderedVector {
        OrderedVector::new(v.to_vec()).unwrap()
    }

    fn cfg(beta: f64, t: f64, paths: usize) -> SdeConfig {
        SdeConfig { paths, dt: 1e-2 * t.max(0.1), ..SdeConfig::new(beta, t, 17) }
    }

    #[test]
    fn semicircle_quantiles_are_symmetric() {
        for m in 1..6 {
            let q = semicircle_quantiles(m);
            for r in 0..m {
                assert!((q[r] + q[m - 1 - r]).abs() < 1e-12);
            }
            assert!(q.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(semicircle_quantiles(1), vec![0.0]);
    }

    #[test]
    fn ties_are_split_only_when_present() {
        assert_eq!(split_ties(&[0.0, 1.0], 0.01), vec![0.0, 1.0]);
        let x = split_ties(&[0.0, 0.0, 0.0, 2.0], 0.01);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        assert!((x.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn states_stay_ordered() {
        let mut rng = stream(3, 0, 0);
        for scheme in [Scheme::Implicit, Scheme::EulerSorted, Scheme::EulerReflect] {
            let c = SdeConfig { scheme, ..cfg(0.5, 1.0, 1) };
            for _ in 0..50 {
                let y = simulate_dbm(&ov(&[0.0, 0.0, 0.1]), &c, &mut rng).unwrap();
                assert!(y.values().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn implicit_step_solves_its_equation() {
        let mut rng = stream(21, 0, 0);
        for ou in [false, true] {
            let process = if ou { Process::Dou } else { Process::Dbm };
            let c = cfg(0.5, 1.0, 1);
            let st = Stepper::new(process, &c, 1e-3);
            for _ in 0..200 {
                let x = [0.0, 1e-4, 0.3, 0.31];
                let db: Vec<f64> = (0..4).map(|_| 0.05 * normal(&mut rng)).collect();
                let mut y = x;
                let mut drift = [0.0; 4];
                assert!(st.implicit_step(&mut y, 1e-3, &db, &mut drift));
                assert!(y.windows(2).all(|w| w[0] < w[1]));
                let mut z: Vec<f64> = x.iter().zip(&db).map(|(a, b)| a + b).collect();
                z.sort_by(f64::total_cmp);
                st.drift(&y, &mut drift);
                for i in 0..4 {
                    // Newton stops at λ² < 1e−8, i.e. well below 1e−8·√(dt β/2)
                    assert!((y[i] - z[i] - 1e-3 * drift[i]).abs() < 1e-9, "{y:?}");
                }
            }
        }
    }

    #[test]
    fn reflect_and_sort_agree() {
        let mut a = stream(4, 0, 0);
        let mut b = stream(4, 0, 0);
        let x0 = ov(&[-0.3, 0.0, 0.2, 1.0]);
        let s = simulate_dbm(&x0, &SdeConfig { scheme: Scheme::EulerSorted, ..cfg(1.0, 0.5, 1) }, &mut a).unwrap();
        let r = simulate_dbm(&x0, &SdeConfig { scheme: Scheme::EulerReflect, ..cfg(1.0, 0.5, 1) }, &mut b).unwrap();
        assert_eq!(s, r);
    }

    #[test]
    fn one_particle_is_brownian() {
        let c = cfg(1.3, 1.0, 20000);
        let st = StatSet::new(&[Statistic::P1, Statistic::P2], 0.65, 1).unwrap();
        let e = mc_statistics(Process::Dbm, &ov(&[0.5]), &c, &st).unwrap();
        assert!(e[0].z_against(0.5).abs() < 4.0);
        assert!(e[1].z_against(0.25 + 1.0).abs() < 4.0);
    }

    #[test]
    fn ou_mean_decays() {
        let c = cfg(1.0, 1.0, 20000);
        let st = StatSet::new(&[Statistic::P1], 0.5, 1).unwrap();
        let e = mc_statistics(Process::Dou, &ov(&[2.0]), &c, &st).unwrap();
        // Euler bias on the mean is O(dt)
        assert!((e[0].mean - 2.0 * (-0.5f64).exp()).abs() < 4.0 * e[0].std_error + 2e-2);
    }

    #[test]
    fn p1_martingale_and_jack_moment() {
        let x0 = ov(&[0.0, 1.0]);
        let c = SdeConfig { dt: 1e-3, ..cfg(2.0, 0.5, 20000) };
        let p1 = mc_jack_moment(Process::Dbm, &x0, &c, &part![1]).unwrap();
        assert!(p1.z_against(1.0).abs() < 4.0, "{p1:?}");
        let j2 = mc_jack_moment(Process::Dbm, &x0, &c, &part![2]).unwrap();
        let basis = JackBasis::new(JackParams::new(1.0, 2).unwrap(), &part![2]).unwrap();
        let act = SemigroupAction::on_basis(&basis, Process::Dbm, 0.5).unwrap();
        let coef = semigroup_apply(&act, &[(part![2], 1.0)].into()).unwrap();
        let expect = basis.from_jack_basis(&coef).unwrap().eval(x0.values()).unwrap();
        assert!(j2.z_against(expect).abs() < 4.0, "{j2:?} vs {expect}");
        assert_eq!(mc_jack_moment(Process::Dbm, &x0, &c, &Partition::empty()).unwrap(), Estimate::exact(1.0));
    }

    #[test]
    fn dou_relaxes_to_bessel_dimension() {
        let c = SdeConfig { paths: 4000, ..cfg(1.0, 2.0, 0) };
        let r = mean_square_relaxation(&ov(&[-1.0, 0.5, 2.0]), &c, &[0.5, 1.0, 2.0]).unwrap();
        assert!(r.z_scores().iter().all(|z| z.abs() < 4.0), "{r:?}");
        // far from the start value, close to δ = 6
        assert!((r.expected[2] - 6.0).abs() < (r.expected[0] - 6.0).abs());
    }

    #[test]
    fn reproducible() {
        let st = StatSet::new(&default_pipeline_stats(), 0.25, 2).unwrap();
        let c = cfg(0.5, 0.3, 200);
        let a = mc_statistics(Process::Dbm, &ov(&[0.0, 0.4]), &c, &st).unwrap();
        let b = mc_statistics(Process::Dbm, &ov(&[0.0, 0.4]), &c, &st).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn squared_radius_slope_small() {
        let c = SdeConfig { dt: 2e-3, ..cfg(2.0, 1.0, 20000) };
        let r = squared_radius_slope(&ov(&[-0.5, 0.5]), &c, &[0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(r.expected, 4.0);
        assert!(r.slope.z_against(4.0).abs() < 4.0, "{r:?}");
    }

    #[test]
    fn pipelines_agree_at_time_zero() {
        let c = cfg(1.0, 0.0, 4000);
        let r = mc_intertwining(Process::Dbm, &ov(&[0.0, 1.0, 2.5]), &c, &default_pipeline_stats(), 0.0).unwrap();
        assert!(r.max_abs_z() < 4.0, "{r:?}");
    }

    #[test]
    fn statistic_parsing() {
        let v = parse_statistics("p1,p2,p1sq,jack:2,1").unwrap();
        assert_eq!(v, vec![Statistic::P1, Statistic::P2, Statistic::P1Sq, Statistic::Jack(part![2, 1])]);
        assert_eq!(v[3].to_string(), "jack:2,1");
        assert!(parse_statistics("p3").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SdeConfig { beta: 0.0, ..cfg(1.0, 1.0, 1) }.validate().is_err());
        assert!(SdeConfig { paths: 0, ..cfg(1.0, 1.0, 1) }.validate().is_err());
        assert_eq!(SdeConfig::new(1.0, 0.5, 1).steps().0, 1000);
    }
}
