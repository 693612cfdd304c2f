//! The Dixon–Anderson kernel `Λ^(k)(x^(k+1), ·)`: density, samplers,
//! quadrature and Monte Carlo moments.
//!
//! With `β = 2θ` the density on the interlacing set is
//!
//! ```text
//! Γ((k+1)θ)/Γ(θ)^{k+1} · Π_{i<j} (a_j − a_i)^{1−2θ} · Π_{i<j} (x_j − x_i)
//!     · Π_{i,j} |x_i − a_j|^{θ−1}
//! ```
//!
//! The primary sampler draws Dirichlet(θ, …, θ) weights and returns the
//! roots of `Σ_j w_j/(z − a_j) = 0`, one in each gap of `a`.

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::jack::{build_jack, JackParams};
use crate::partitions::Partition;
use crate::quadrature::tanh_sinh;
use crate::stats::{mc_vector, tags, Estimate, Rng};

/// Iteration cap for the per-gap root solve.
pub const ROOT_MAX_ITER: usize = 200;
/// Root tolerance relative to the spread of the top level.
pub const ROOT_REL_TOL: f64 = 1e-12;

/// A weakly increasing real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OrderedVector(Vec<f64>);

impl OrderedVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::NotOrdered(i));
        }
        Ok(OrderedVector(values))
    }

    /// Sorts first.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Error on the first tie.
    pub fn require_strict(&self) -> Result<()> {
        match self.0.windows(2).position(|w| w[0] >= w[1]) {
            Some(i) => Err(Error::TiedLevels(i, i + 1)),
            None => Ok(()),
        }
    }

    /// Spreads each run of equal values symmetrically with spacing `eps`.
    /// `eps` must be small against the gaps between distinct values.
    pub fn separate_ties(&self, eps: f64) -> OrderedVector {
        let mut v = self.0.clone();
        let mut start = 0;
        while start < v.len() {
            let mut end = start + 1;
            while end < v.len() && self.0[end] == self.0[start] {
                end += 1;
            }
            let m = end - start;
            for (r, x) in v[start..end].iter_mut().enumerate() {
                *x += eps * (r as f64 - 0.5 * (m as f64 - 1.0));
            }
            start = end;
        }
        OrderedVector(v)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn interlaces(&self, top: &OrderedVector) -> bool {
        interlaces(top.values(), self.values())
    }
}

impl TryFrom<Vec<f64>> for OrderedVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OrderedVector> for Vec<f64> {
    fn from(v: OrderedVector) -> Vec<f64> {
        v.0
    }
}

impl std::str::FromStr for OrderedVector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let vals = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number '{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vals)
    }
}

/// `top[i] ≤ x[i] ≤ top[i+1]` for all `i`.
pub fn interlaces(top: &[f64], x: &[f64]) -> bool {
    top.len() == x.len() + 1 && x.iter().enumerate().all(|(i, &v)| top[i] <= v && v <= top[i + 1])
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTheta(theta))
    }
}

fn check_dims(top: &OrderedVector, x: &OrderedVector) -> Result<()> {
    if x.dim() + 1 != top.dim() {
        return Err(Error::DimensionMismatch { expected: top.dim() - 1, got: x.dim() });
    }
    Ok(())
}

/// `log Γ((k+1)θ) − (k+1) log Γ(θ) + (1−2θ) Σ_{i<j} log(a_j − a_i)`.
fn log_norm(top: &[f64], theta: f64) -> f64 {
    let k1 = top.len() as f64;
    let mut s = ln_gamma(k1 * theta) - k1 * ln_gamma(theta);
    for j in 0..top.len() {
        for i in 0..j {
            s += (1.0 - 2.0 * theta) * (top[j] - top[i]).ln();
        }
    }
    s
}

/// `(θ − 1) log d`, with the `θ = 1` case exact at `d = 0`.
fn edge_term(theta: f64, d: f64) -> f64 {
    if theta == 1.0 {
        0.0
    } else {
        (theta - 1.0) * d.ln()
    }
}

/// Log of the kernel density; `−∞` off the interlacing set, `+∞` on an
/// edge when `θ < 1`.
pub fn da_log_density(top: &OrderedVector, x: &OrderedVector, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_dims(top, x)?;
    top.require_strict()?;
    let (a, x) = (top.values(), x.values());
    if !interlaces(a, x) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut s = log_norm(a, theta);
    for j in 0..x.len() {
        for i in 0..j {
            s += (x[j] - x[i]).ln();
        }
    }
    for &xi in x {
        for &aj in a {
            s += edge_term(theta, (xi - aj).abs());
        }
    }
    // an edge with θ < 1 can meet a coincident pair x_i = x_{i+1}; the
    // edge singularity wins
    Ok(if s.is_nan() { f64::INFINITY } else { s })
}

pub fn da_density(top: &OrderedVector, x: &OrderedVector, theta: f64) -> Result<f64> {
    da_log_density(top, x, theta).map(f64::exp)
}

/// Reusable sampler state for one `θ`.
#[derive(Debug, Clone)]
pub struct DaSampler {
    theta: f64,
    gamma: Gamma<f64>,
}

impl DaSampler {
    pub fn new(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        let gamma = Gamma::new(theta, 1.0).map_err(|e| Error::Config(e.to_string()))?;
        Ok(DaSampler { theta, gamma })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Writes a draw for strictly increasing `top` into `out`
    /// (`out.len() == top.len() − 1`). `w` is scratch of length `top.len()`.
    pub fn sample_into(&self, top: &[f64], rng: &mut Rng, w: &mut [f64], out: &mut [f64]) -> Result<()> {
        // Dirichlet weights up to normalization, which the secular equation
        // does not see
        for wj in w.iter_mut() {
            *wj = self.gamma.sample(rng);
        }
        if w.iter().all(|&v| v == 0.0) {
            w.iter_mut().for_each(|v| *v = 1.0);
        }
        let tol = ROOT_REL_TOL * (top[top.len() - 1] - top[0]);
        for (j, o) in out.iter_mut().enumerate() {
            *o = secular_root(top, w, j, tol)?;
        }
        Ok(())
    }

    pub fn sample(&self, top: &OrderedVector, rng: &mut Rng) -> Result<OrderedVector> {
        top.require_strict()?;
        let mut w = vec![0.0; top.dim()];
        let mut out = vec![0.0; top.dim() - 1];
        self.sample_into(top.values(), rng, &mut w, &mut out)?;
        Ok(OrderedVector(out))
    }
}

/// Root of `Σ_i w_i/(z − a_i)` in `(a_j, a_{j+1})`: safeguarded Newton in
/// the local coordinate `s = z − a_j`.
fn secular_root(a: &[f64], w: &[f64], j: usize, tol: f64) -> Result<f64> {
    let len = a[j + 1] - a[j];
    let (wl, wr) = (w[j], w[j + 1]);
    if wl == 0.0 && wr != 0.0 {
        return Ok(a[j]);
    }
    if wr == 0.0 && wl != 0.0 {
        return Ok(a[j + 1]);
    }
    let eval = |s: f64| {
        let (mut f, mut df) = (0.0, 0.0);
        for (i, (&ai, &wi)) in a.iter().zip(w).enumerate() {
            let d = if i == j { s } else { s - (ai - a[j]) };
            f += wi / d;
            df -= wi / (d * d);
        }
        (f, df)
    };
    let (mut lo, mut hi) = (0.0, len);
    // root of the two nearest poles alone
    let mut s = if wl + wr > 0.0 { len * wl / (wl + wr) } else { 0.5 * len };
    if !(s > 0.0 && s < len) {
        s = 0.5 * len;
    }
    for _ in 0..ROOT_MAX_ITER {
        let (f, df) = eval(s);
        if f == 0.0 {
            return Ok(a[j] + s);
        }
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let mut next = s - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= tol || hi - lo <= tol {
            return Ok(a[j] + next.clamp(0.0, len));
        }
        s = next;
    }
    Err(Error::RootBracket { gap: j, lo: a[j] + lo, hi: a[j] + hi })
}

/// One draw from `Λ^(k)(top, ·)`.
pub fn da_sample(top: &OrderedVector, theta: f64, rng: &mut Rng) -> Result<OrderedVector> {
    DaSampler::new(theta)?.sample(top, rng)
}

/// Largest `k` accepted by [`da_sample_rejection`].
pub const REJECTION_MAX_K: usize = 3;
const REJECTION_MAX_TRIES: usize = 10_000_000;

/// Independent sampler for `k ≤ 3`: propose each `x_i` from a scaled
/// Beta(θ, θ) on its gap, which absorbs the two singular edge factors, and
/// accept against the remaining bounded factors.
pub fn da_sample_rejection(top: &OrderedVector, theta: f64, rng: &mut Rng) -> Result<OrderedVector> {
    check_theta(theta)?;
    top.require_strict()?;
    let a = top.values();
    let k = a.len() - 1;
    if k > REJECTION_MAX_K {
        return Err(Error::Config(format!("rejection sampler supports k ≤ {REJECTION_MAX_K}, got {k}")));
    }
    let beta = Beta::new(theta, theta).map_err(|e| Error::Config(e.to_string()))?;
    let log_ratio = |x: &[f64]| {
        let mut s = 0.0;
        for j in 0..k {
            for i in 0..j {
                s += (x[j] - x[i]).ln();
            }
            for m in 0..=k {
                if m != j && m != j + 1 {
                    s += edge_term(theta, (x[j] - a[m]).abs());
                }
            }
        }
        s
    };
    let mut bound = 0.0;
    for j in 0..k {
        for i in 0..j {
            bound += (a[j + 1] - a[i]).ln();
        }
        for m in 0..=k {
            if m == j || m == j + 1 {
                continue;
            }
            let (near, far) = if m > j + 1 { (a[m] - a[j + 1], a[m] - a[j]) } else { (a[j] - a[m], a[j + 1] - a[m]) };
            bound += edge_term(theta, if theta < 1.0 { near } else { far });
        }
    }
    let mut x = vec![0.0; k];
    for _ in 0..REJECTION_MAX_TRIES {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = a[j] + (a[j + 1] - a[j]) * beta.sample(rng);
        }
        let u: f64 = rng.gen();
        if u.ln() <= log_ratio(&x) - bound {
            return Ok(OrderedVector(x));
        }
    }
    Err(Error::Config("rejection sampler exceeded its attempt budget".into()))
}

/// Monte Carlo estimate of `E[J_κ(X; θ)]` for `X ~ Λ^(k)(top, ·)`.
pub fn da_moment_mc(
    top: &OrderedVector,
    theta: f64,
    kappa: &Partition,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Estimate> {
    top.require_strict()?;
    let k = top.dim() - 1;
    let params = JackParams::new(theta, k)?;
    params.check_len(kappa)?;
    if kappa.is_empty() {
        return Ok(Estimate::exact(1.0));
    }
    let jack = build_jack(&params, kappa)?.compile();
    let sampler = DaSampler::new(theta)?;
    let a = top.values();
    let failure = std::sync::Mutex::new(None);
    let est = mc_vector(n, 1, workers, seed, tags::DA_MOMENT, |rng, out| {
        let mut w = vec![0.0; k + 1];
        let mut x = vec![0.0; k];
        if let Err(e) = sampler.sample_into(a, rng, &mut w, &mut x) {
            failure.lock().unwrap().get_or_insert(e);
        }
        out[0] = jack.eval(&x);
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(est[0]),
    }
}

/// `∫ Λ^(k)(top, x) f(x) dx` by nested tanh-sinh over the interlacing box,
/// one coordinate per level. Each coordinate's two edge factors are taken
/// from exact endpoint distances. Practical for `k ≤ 2`.
pub fn da_integrate(top: &OrderedVector, theta: f64, f: impl Fn(&[f64]) -> f64, tol: f64) -> Result<f64> {
    check_theta(theta)?;
    top.require_strict()?;
    let a = top.values();
    let k = a.len() - 1;
    let lognorm = log_norm(a, theta);
    let mut pts = vec![(0.0, 0.0, 0.0); k];
    let leaf = |p: &[(f64, f64, f64)]| {
        let x: Vec<f64> = p.iter().map(|q| q.0).collect();
        let mut s = lognorm;
        for j in 0..k {
            let (xj, dl, dr) = p[j];
            for i in 0..j {
                s += (xj - x[i]).ln();
            }
            for (m, &am) in a.iter().enumerate() {
                let d = if m == j {
                    dl
                } else if m == j + 1 {
                    dr
                } else {
                    (xj - am).abs()
                };
                s += edge_term(theta, d);
            }
        }
        s.exp() * f(&x)
    };
    Ok(nested(a, 0, &mut pts, &leaf, tol))
}

fn nested(
    a: &[f64],
    level: usize,
    pts: &mut Vec<(f64, f64, f64)>,
    leaf: &dyn Fn(&[(f64, f64, f64)]) -> f64,
    tol: f64,
) -> f64 {
    if level == pts.len() {
        return leaf(pts);
    }
    let cell = std::cell::RefCell::new(std::mem::take(pts));
    let v = tanh_sinh(
        |x, dl, dr| {
            let mut p = cell.borrow().clone();
            p[level] = (x, dl, dr);
            nested(a, level + 1, &mut p, leaf, tol)
        },
        a[level],
        a[level + 1],
        tol,
    );
    *pts = cell.into_inner();
    v
}

/// CDF of `Λ^(1)((a, b), ·)`, a Beta(θ, θ) law on `[a, b]`.
pub fn da_cdf_k1(a: f64, b: f64, theta: f64, x: f64) -> f64 {
    let u = ((x - a) / (b - a)).clamp(0.0, 1.0);
    beta_reg(theta, theta, u)
}
