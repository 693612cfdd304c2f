//! Jack symmetric polynomials `J_κ(·; θ)` in `k` variables.
//!
//! `J_κ` is the eigenfunction of `Σ z_i² ∂_i² + 2θ Σ_{i≠j} z_i²/(z_i − z_j) ∂_i`
//! whose leading monomial is `m_κ`. The operator is triangular on monomials
//! (it only produces `m_ν` with `ν` dominated by the input), so within a fixed
//! degree the coefficients follow by back-substitution, after which the
//! polynomial is rescaled so that
//! `J_κ(1_k) = θ^{-|κ|} Π_i Γ((k+1−i)θ + κ_i)/Γ((k+1−i)θ)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::operators::apply_opjack;
use crate::partitions::{partitions_of, weight_major_desc, Partition};
use crate::symmpoly::SymPoly;

/// Eigenvalue gaps below this abort the build as a degenerate θ.
pub const EIGEN_GAP_TOL: f64 = 1e-8;

/// Relative size under which a remainder coefficient counts as round-off in
/// [`JackBasis::to_jack_basis`].
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JackParams {
    pub theta: f64,
    pub k: usize,
}

impl JackParams {
    pub fn new(theta: f64, k: usize) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidTheta(theta));
        }
        if k == 0 {
            return Err(Error::Config("number of variables must be at least 1".into()));
        }
        Ok(Self { theta, k })
    }

    pub fn check_len(&self, kappa: &Partition) -> Result<()> {
        if kappa.len() > self.k {
            return Err(Error::PartitionTooLong { partition: kappa.clone(), len: kappa.len(), k: self.k });
        }
        Ok(())
    }
}

/// `Σ μ_i(μ_i − 1) + 2θ Σ (k − i) μ_i`, the eigenvalue of the Jack operator
/// on `J_μ`.
pub fn eigenvalue(params: &JackParams, mu: &Partition) -> f64 {
    let k = params.k as f64;
    mu.parts()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let m = m as f64;
            m * (m - 1.0) + 2.0 * params.theta * (k - (i + 1) as f64) * m
        })
        .sum()
}

/// `J_κ(1_k; θ)` as a log-Gamma ratio product.
pub fn jack_norm(params: &JackParams, kappa: &Partition) -> f64 {
    let theta = params.theta;
    let k = params.k as f64;
    let log: f64 = kappa
        .parts()
        .iter()
        .enumerate()
        .map(|(i, &part)| {
            let base = (k - i as f64) * theta;
            ln_gamma(base + part as f64) - ln_gamma(base)
        })
        .sum();
    (log - kappa.weight() as f64 * theta.ln()).exp()
}

/// `J_κ(1_k; θ)` as the finite product `Π_i Π_{j ≤ κ_i} (k + 1 − i + (j − 1)/θ)`.
pub fn jack_norm_product(params: &JackParams, kappa: &Partition) -> f64 {
    let k = params.k as f64;
    let mut out = 1.0;
    for (i, &part) in kappa.parts().iter().enumerate() {
        for j in 0..part {
            out *= k - i as f64 + j as f64 / params.theta;
        }
    }
    out
}

/// `J_κ(1_k)/J_κ(1_{k+1}) · Π_{m ≤ k} Γ((k+2−m)θ + κ_m)/Γ((k+1−m)θ + κ_m)`.
/// Independent of κ: always `Γ((k+1)θ)/Γ(θ)`.
pub fn pochhammer_ratio(theta: f64, k: usize, kappa: &Partition) -> Result<f64> {
    let small = JackParams::new(theta, k)?;
    small.check_len(kappa)?;
    let big = JackParams::new(theta, k + 1)?;
    let log: f64 = (1..=k)
        .map(|m| {
            let part = kappa.part(m) as f64;
            ln_gamma((k + 2 - m) as f64 * theta + part) - ln_gamma((k + 1 - m) as f64 * theta + part)
        })
        .sum();
    Ok(jack_norm(&small, kappa) / jack_norm(&big, kappa) * log.exp())
}

/// Monomials `m_ν` of the same degree, dominated by `kappa` and of length at
/// most `k`, in lexicographically descending order (so `kappa` comes first).
fn dominated(params: &JackParams, kappa: &Partition) -> Vec<Partition> {
    partitions_of(kappa.weight(), params.k).into_iter().filter(|nu| nu.is_dominated_by(kappa)).collect()
}

/// Operator images of monomials, memoized per basis build.
struct OpCache {
    params: JackParams,
    images: BTreeMap<Partition, SymPoly>,
}

impl OpCache {
    fn new(params: JackParams) -> Self {
        Self { params, images: BTreeMap::new() }
    }

    fn image(&mut self, mu: &Partition) -> &SymPoly {
        let params = self.params;
        self.images.entry(mu.clone()).or_insert_with(|| {
            let m = SymPoly::monomial(params.k, mu.clone()).expect("length checked by caller");
            apply_opjack(&m, params.theta)
        })
    }
}

/// Builds `J_κ` in the monomial basis.
pub fn build_jack(params: &JackParams, kappa: &Partition) -> Result<SymPoly> {
    build_with_cache(&mut OpCache::new(*params), kappa)
}

fn build_with_cache(cache: &mut OpCache, kappa: &Partition) -> Result<SymPoly> {
    let params = cache.params;
    params.check_len(kappa)?;
    let support = dominated(&params, kappa);
    let target = eigenvalue(&params, kappa);
    let mut coeffs: Vec<f64> = Vec::with_capacity(support.len());
    for (n, nu) in support.iter().enumerate() {
        if n == 0 {
            coeffs.push(1.0);
            continue;
        }
        let gap = target - eigenvalue(&params, nu);
        if gap.abs() < EIGEN_GAP_TOL {
            return Err(Error::DegenerateTheta { theta: params.theta, kappa: kappa.clone(), mu: nu.clone(), gap });
        }
        let mut acc = 0.0;
        for (mu, c) in support[..n].iter().zip(&coeffs) {
            acc += cache.image(mu).coeff(nu) * c;
        }
        coeffs.push(acc / gap);
    }
    let raw = SymPoly::from_terms(params.k, support.into_iter().zip(coeffs))?;
    let scale = jack_norm_product(&params, kappa) / raw.eval_at_ones();
    Ok(raw.scale(scale))
}

/// The Jack polynomials `{J_μ}` for an index set closed under lowering,
/// with their values at `1_k`.
#[derive(Debug, Clone)]
pub struct JackBasis {
    params: JackParams,
    index: Vec<Partition>,
    polys: BTreeMap<Partition, SymPoly>,
    norms: BTreeMap<Partition, f64>,
}

impl JackBasis {
    /// Basis over `sub_partitions(kappa_max, k)`.
    pub fn new(params: JackParams, kappa_max: &Partition) -> Result<Self> {
        params.check_len(kappa_max)?;
        Self::with_index(params, kappa_max.sub_partitions(params.k))
    }

    /// Basis over every partition of weight `≤ degree` with at most `k` parts;
    /// spans all symmetric polynomials of that degree.
    pub fn up_to_degree(params: JackParams, degree: u32) -> Result<Self> {
        let mut index: Vec<Partition> = (0..=degree).flat_map(|d| partitions_of(d, params.k)).collect();
        index.sort_by(weight_major_desc);
        Self::with_index(params, index)
    }

    fn with_index(params: JackParams, mut index: Vec<Partition>) -> Result<Self> {
        index.sort_by(weight_major_desc);
        index.dedup();
        let mut cache = OpCache::new(params);
        let mut polys = BTreeMap::new();
        let mut norms = BTreeMap::new();
        for mu in &index {
            params.check_len(mu)?;
            polys.insert(mu.clone(), build_with_cache(&mut cache, mu)?);
            norms.insert(mu.clone(), jack_norm_product(&params, mu));
        }
        Ok(Self { params, index, polys, norms })
    }

    pub fn params(&self) -> &JackParams {
        &self.params
    }

    /// Weight-major descending.
    pub fn index(&self) -> &[Partition] {
        &self.index
    }

    pub fn contains(&self, mu: &Partition) -> bool {
        self.polys.contains_key(mu)
    }

    pub fn poly(&self, mu: &Partition) -> Result<&SymPoly> {
        self.polys.get(mu).ok_or_else(|| Error::Unindexed(mu.clone()))
    }

    /// `J_μ(1_k; θ)`.
    pub fn norm(&self, mu: &Partition) -> Result<f64> {
        self.norms.get(mu).copied().ok_or_else(|| Error::Unindexed(mu.clone()))
    }

    /// Coefficients `a_μ` with `p = Σ a_μ J_μ`, by eliminating the
    /// lexicographically leading monomial degree by degree.
    pub fn to_jack_basis(&self, p: &SymPoly) -> Result<BTreeMap<Partition, f64>> {
        if p.num_vars() != self.params.k {
            return Err(Error::DimensionMismatch { expected: self.params.k, got: p.num_vars() });
        }
        let mut out = BTreeMap::new();
        let mut rem: BTreeMap<Partition, f64> = p.terms().clone();
        let mut scale = p.max_abs_coeff();
        // derived Ord on parts is lexicographic; take from the top
        while let Some((lead, c)) = rem.iter().next_back().map(|(m, c)| (m.clone(), *c)) {
            if c.abs() <= RESIDUAL_TOL * scale {
                rem.remove(&lead);
                continue;
            }
            let j = self.polys.get(&lead).ok_or_else(|| Error::BasisDoesNotSpan(lead.clone()))?;
            let a = c / j.coeff(&lead);
            for (nu, v) in j.terms() {
                let e = rem.entry(nu.clone()).or_insert(0.0);
                *e -= a * v;
                scale = scale.max((a * v).abs());
            }
            rem.remove(&lead);
            out.insert(lead, a);
        }
        Ok(out)
    }

    /// `Σ a_μ J_μ` in the monomial basis.
    pub fn from_jack_basis(&self, coeffs: &BTreeMap<Partition, f64>) -> Result<SymPoly> {
        let mut out = SymPoly::zero(self.params.k);
        for (mu, a) in coeffs {
            out = out.axpy(*a, self.poly(mu)?)?;
        }
        Ok(out)
    }

    /// Generalized binomial coefficients `binom(κ, ρ)_θ` for all `ρ ⊆ κ`,
    /// read off `J_κ(1_k + z)/J_κ(1_k) = Σ_ρ binom(κ, ρ) J_ρ(z)/J_ρ(1_k)`.
    pub fn binomial_coefficients(&self, kappa: &Partition) -> Result<BTreeMap<Partition, f64>> {
        let shifted = self.poly(kappa)?.shift_by_ones().scale(1.0 / self.norm(kappa)?);
        let mut out = self.to_jack_basis(&shifted)?;
        for (rho, a) in out.iter_mut() {
            *a *= self.norm(rho)?;
        }
        Ok(out)
    }

    /// `(i, κ_(i), binom(κ, κ_(i)))` for every valid lowering of `kappa`.
    pub fn lowering_binomials(&self, kappa: &Partition) -> Result<Vec<(usize, Partition, f64)>> {
        if kappa.is_empty() {
            return Ok(Vec::new());
        }
        let binoms = self.binomial_coefficients(kappa)?;
        Ok(kappa
            .lowerings()
            .map(|(i, low)| {
                let b = binoms.get(&low).copied().unwrap_or(0.0);
                (i, low, b)
            })
            .collect())
    }
}
