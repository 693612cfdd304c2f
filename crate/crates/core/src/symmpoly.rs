//! Symmetric polynomials in `k` variables over the monomial symmetric basis.
//!
//! [`SymPoly`] stores `Σ c_μ m_μ`. Operations that need individual monomials
//! (differentiation, products, the shift `z → 1_k + z`) go through the full
//! expansion [`Polynomial`] and are read back at sorted exponent vectors.

use std::collections::BTreeMap;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::Partition;

/// Default cap on the total degree of products.
pub const DEFAULT_DEGREE_CAP: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymPolyRepr", into = "SymPolyRepr")]
pub struct SymPoly {
    k: usize,
    terms: BTreeMap<Partition, f64>,
}

impl SymPoly {
    pub fn zero(k: usize) -> Self {
        Self { k, terms: BTreeMap::new() }
    }

    pub fn constant(k: usize, c: f64) -> Self {
        let mut p = Self::zero(k);
        p.add_term(Partition::empty(), c);
        p
    }

    /// The monomial symmetric polynomial `m_μ`.
    pub fn monomial(k: usize, mu: Partition) -> Result<Self> {
        Self::from_terms(k, [(mu, 1.0)])
    }

    pub fn from_terms(k: usize, terms: impl IntoIterator<Item = (Partition, f64)>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("a symmetric polynomial needs k >= 1 variables".into()));
        }
        let mut p = Self::zero(k);
        for (mu, c) in terms {
            if mu.len() > k {
                return Err(Error::PartitionTooLong { len: mu.len(), partition: mu, k });
            }
            p.add_term(mu, c);
        }
        Ok(p)
    }

    pub(crate) fn add_term(&mut self, mu: Partition, c: f64) {
        debug_assert!(mu.len() <= self.k);
        let entry = self.terms.entry(mu);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                if c != 0.0 {
                    e.insert(c);
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.k
    }

    pub fn terms(&self) -> &BTreeMap<Partition, f64> {
        &self.terms
    }

    pub fn coeff(&self, mu: &Partition) -> f64 {
        self.terms.get(mu).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Partition::weight).max()
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops coefficients with `|c| <= tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|_, c| c.abs() > tol);
        self
    }

    pub fn homogeneous_part(&self, degree: u32) -> SymPoly {
        Self {
            k: self.k,
            terms: self.terms.iter().filter(|(mu, _)| mu.weight() == degree).map(|(m, c)| (m.clone(), *c)).collect(),
        }
    }

    fn check_vars(&self, other: &SymPoly) -> Result<()> {
        if self.k != other.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: other.k });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &SymPoly) -> Result<SymPoly> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (mu, c) in &other.terms {
            out.add_term(mu.clone(), *c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> SymPoly {
        let mut out = SymPoly::zero(self.k);
        for (mu, c) in &self.terms {
            out.add_term(mu.clone(), c * s);
        }
        out
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &SymPoly) -> Result<SymPoly> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (mu, c) in &other.terms {
            out.add_term(mu.clone(), s * c);
        }
        Ok(out)
    }

    pub fn multiply(&self, other: &SymPoly) -> Result<SymPoly> {
        self.multiply_capped(other, DEFAULT_DEGREE_CAP)
    }

    /// Product in the monomial basis. Only exponent vectors that come out
    /// weakly decreasing are accumulated, which reads off `m_λ` coefficients
    /// directly.
    pub fn multiply_capped(&self, other: &SymPoly, cap: u32) -> Result<SymPoly> {
        self.check_vars(other)?;
        let degree = self.degree().unwrap_or(0) + other.degree().unwrap_or(0);
        if degree > cap {
            return Err(Error::DegreeCap { degree, cap });
        }
        let a = self.to_polynomial();
        let b = other.to_polynomial();
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        let mut e = vec![0u32; self.k];
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                for i in 0..self.k {
                    e[i] = ea[i] + eb[i];
                }
                if is_weakly_decreasing(&e) {
                    *acc.entry(e.clone()).or_insert(0.0) += ca * cb;
                }
            }
        }
        Ok(Self::from_sorted_exponents(self.k, acc))
    }

    fn from_sorted_exponents(k: usize, acc: BTreeMap<Vec<u32>, f64>) -> SymPoly {
        let mut out = SymPoly::zero(k);
        for (e, c) in acc {
            out.add_term(Partition::new(e).expect("sorted exponent vector"), c);
        }
        out
    }

    /// Full multivariate expansion, one term per distinct permutation.
    pub fn to_polynomial(&self) -> Polynomial {
        let mut p = Polynomial::zero(self.k);
        for (mu, c) in &self.terms {
            for_each_distinct_permutation(&mu.padded(self.k), |e| {
                *p.terms.entry(e.to_vec()).or_insert(0.0) += c;
            });
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: x.len() });
        }
        Ok(self.compile().eval(x))
    }

    /// Value at `1_k`: each `m_μ` contributes its number of distinct
    /// rearrangements.
    pub fn eval_at_ones(&self) -> f64 {
        self.terms.iter().map(|(mu, c)| c * mu.distinct_permutations(self.k)).sum()
    }

    /// `q(z) = p(1_k + z)`, expanded back into monomials.
    pub fn shift_by_ones(&self) -> SymPoly {
        let full = self.to_polynomial();
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        let k = self.k;
        let mut sub = vec![0u32; k];
        for (e, c) in &full.terms {
            // enumerate all a ≤ e componentwise; keep sorted a only
            shift_rec(e, 0, &mut sub, *c, &mut acc);
        }
        Self::from_sorted_exponents(k, acc)
    }

    /// Precomputed expansion for repeated evaluation.
    pub fn compile(&self) -> CompiledPoly {
        let full = self.to_polynomial();
        let max_pow = full.terms.keys().flat_map(|e| e.iter().copied()).max().unwrap_or(0) as usize;
        CompiledPoly {
            k: self.k,
            max_pow,
            terms: full.terms.into_iter().collect(),
        }
    }
}

fn shift_rec(e: &[u32], i: usize, sub: &mut [u32], c: f64, acc: &mut BTreeMap<Vec<u32>, f64>) {
    if i == e.len() {
        *acc.entry(sub.to_vec()).or_insert(0.0) += c;
        return;
    }
    let hi = if i == 0 { e[0] } else { e[i].min(sub[i - 1]) };
    for a in 0..=hi {
        sub[i] = a;
        shift_rec(e, i + 1, sub, c * binomial(e[i], a), acc);
    }
}

fn binomial(n: u32, r: u32) -> f64 {
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn is_weakly_decreasing(e: &[u32]) -> bool {
    e.windows(2).all(|w| w[0] >= w[1])
}

/// Calls `f` once per distinct rearrangement of `parts`.
pub fn for_each_distinct_permutation(parts: &[u32], mut f: impl FnMut(&[u32])) {
    let mut v = parts.to_vec();
    v.sort_unstable();
    loop {
        f(&v);
        // next lexicographic permutation
        let Some(i) = (0..v.len().saturating_sub(1)).rev().find(|&i| v[i] < v[i + 1]) else {
            return;
        };
        let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("pivot has a successor");
        v.swap(i, j);
        v[i + 1..].reverse();
    }
}

impl Add for &SymPoly {
    type Output = SymPoly;

    fn add(self, rhs: &SymPoly) -> SymPoly {
        self.try_add(rhs).expect("adding polynomials in different numbers of variables")
    }
}

impl Sub for &SymPoly {
    type Output = SymPoly;

    fn sub(self, rhs: &SymPoly) -> SymPoly {
        self.axpy(-1.0, rhs).expect("subtracting polynomials in different numbers of variables")
    }
}

impl Neg for &SymPoly {
    type Output = SymPoly;

    fn neg(self) -> SymPoly {
        self.scale(-1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct SymPolyRepr {
    k: usize,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    mu: Partition,
    c: f64,
}

impl TryFrom<SymPolyRepr> for SymPoly {
    type Error = Error;

    fn try_from(r: SymPolyRepr) -> Result<Self> {
        SymPoly::from_terms(r.k, r.terms.into_iter().map(|t| (t.mu, t.c)))
    }
}

impl From<SymPoly> for SymPolyRepr {
    fn from(p: SymPoly) -> Self {
        SymPolyRepr {
            k: p.k,
            terms: p.terms.into_iter().map(|(mu, c)| TermRepr { mu, c }).collect(),
        }
    }
}

/// A general polynomial in `k` variables, keyed by exponent vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub(crate) k: usize,
    pub(crate) terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(k: usize) -> Self {
        Self { k, terms: BTreeMap::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.k
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, f64> {
        &self.terms
    }

    pub fn add_term(&mut self, e: Vec<u32>, c: f64) {
        debug_assert_eq!(e.len(), self.k);
        if c != 0.0 {
            *self.terms.entry(e).or_insert(0.0) += c;
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for c in self.terms.values_mut() {
            *c *= s;
        }
        self
    }

    pub fn add_assign_scaled(&mut self, s: f64, other: &Polynomial) {
        for (e, c) in &other.terms {
            *self.terms.entry(e.clone()).or_insert(0.0) += s * c;
        }
    }

    /// Reads `m_λ` coefficients at weakly decreasing exponent vectors.
    /// Rejects input whose coefficients are not permutation invariant to
    /// within `tol` relative to the largest coefficient.
    pub fn to_symmetric(&self, tol: f64) -> Result<SymPoly> {
        let scale = self.terms.values().fold(0.0f64, |m, c| m.max(c.abs())).max(f64::MIN_POSITIVE);
        let mut out = SymPoly::zero(self.k);
        let mut orbit_terms = 0usize;
        for (e, c) in &self.terms {
            if !e.windows(2).all(|w| w[0] >= w[1]) {
                continue;
            }
            let mu = Partition::new(e.clone()).expect("sorted");
            let mut bad = false;
            for_each_distinct_permutation(e, |perm| {
                orbit_terms += 1;
                let v = self.terms.get(perm).copied().unwrap_or(0.0);
                bad |= (v - c).abs() > tol * scale;
            });
            if bad {
                return Err(Error::NotSymmetric(mu));
            }
            out.add_term(mu, *c);
        }
        // a term whose sorted representative is absent
        if orbit_terms < self.terms.len() {
            let stray = self.terms.keys().find(|e| {
                let mut s = (*e).clone();
                s.sort_unstable_by(|a, b| b.cmp(a));
                !self.terms.contains_key(&s)
            });
            if let Some(e) = stray {
                let mut s = e.clone();
                s.sort_unstable_by(|a, b| b.cmp(a));
                return Err(Error::NotSymmetric(Partition::new(s).expect("sorted")));
            }
        }
        Ok(out)
    }
}

/// A symmetric polynomial flattened to `(coefficient, exponents)` pairs for
/// fast evaluation with a per-call power table.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    k: usize,
    max_pow: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPoly {
    pub fn num_vars(&self) -> usize {
        self.k
    }

    /// Panics if `x.len() != k`; use [`SymPoly::eval`] for a checked call.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.k, "evaluation point has wrong dimension");
        let stride = self.max_pow + 1;
        let mut pows = vec![1.0; self.k * stride];
        for (i, &xi) in x.iter().enumerate() {
            for p in 1..stride {
                pows[i * stride + p] = pows[i * stride + p - 1] * xi;
            }
        }
        self.terms
            .iter()
            .map(|(e, c)| e.iter().enumerate().fold(*c, |acc, (i, &p)| acc * pows[i * stride + p as usize]))
            .sum()
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn arb_sympoly(k: usize, max_deg: u32) -> impl Strategy<Value = SymPoly> {
        let parts: Vec<Partition> =
            (0..=max_deg).flat_map(|d| crate::partitions::partitions_of(d, k)).collect();
        prop::collection::vec((0..parts.len(), -2.0f64..2.0), 1..6).prop_map(move |ts| {
            SymPoly::from_terms(k, ts.into_iter().map(|(i, c)| (parts[i].clone(), c))).unwrap()
        })
    }

}
