//! Differential operators on symmetric polynomials, in two independent
//! routes.
//!
//! The *direct* route differentiates the full monomial expansion. The
//! singular drift terms `Σ_{i≠j} g(z_i)/(z_i − z_j) ∂_i` are handled pairwise:
//! for symmetric `f` the numerator `g(z_i)∂_i f − g(z_j)∂_j f` is
//! antisymmetric in `(i, j)` and is divided by `z_i − z_j` exactly, one
//! monomial pair at a time, so no rational intermediate ever appears.
//!
//! The *closed-form* route uses the lowering actions of `B1` and `B2` on
//! Jack polynomials and the commutator `A = B1 B2 − B2 B1` to assemble the
//! generator as a matrix on a Jack subspace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jack::JackBasis;
use crate::partitions::Partition;
use crate::symmpoly::{Polynomial, SymPoly};

/// Relative symmetry tolerance when reading operator output back into the
/// monomial basis.
const SYMMETRY_TOL: f64 = 1e-9;

/// `Σ_i z_i^g ∂_i`.
fn first_order(p: &Polynomial, g: u32) -> Polynomial {
    let mut out = Polynomial::zero(p.k);
    for (e, c) in &p.terms {
        for i in 0..p.k {
            if e[i] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[i] = e[i] - 1 + g;
            out.add_term(d, c * e[i] as f64);
        }
    }
    out
}

/// `Σ_i z_i^g ∂_i²`.
fn pure_second(p: &Polynomial, g: u32) -> Polynomial {
    let mut out = Polynomial::zero(p.k);
    for (e, c) in &p.terms {
        for i in 0..p.k {
            if e[i] < 2 {
                continue;
            }
            let mut d = e.clone();
            d[i] = e[i] - 2 + g;
            out.add_term(d, c * (e[i] * (e[i] - 1)) as f64);
        }
    }
    out
}

/// `Σ_{i≠j} z_i^g/(z_i − z_j) ∂_i` on a symmetric polynomial.
fn pair_drift(p: &Polynomial, g: u32) -> Polynomial {
    let k = p.k;
    let mut out = Polynomial::zero(k);
    let mut numer: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for i in 0..k {
        for j in i + 1..k {
            numer.clear();
            for (e, c) in &p.terms {
                if e[i] > 0 {
                    let mut d = e.clone();
                    d[i] = e[i] - 1 + g;
                    *numer.entry(d).or_insert(0.0) += c * e[i] as f64;
                }
                if e[j] > 0 {
                    let mut d = e.clone();
                    d[j] = e[j] - 1 + g;
                    *numer.entry(d).or_insert(0.0) -= c * e[j] as f64;
                }
            }
            // c (z_i^a z_j^b − z_i^b z_j^a)/(z_i − z_j)
            //   = c z_i^b z_j^b Σ_{s<a−b} z_i^s z_j^{a−b−1−s}
            for (d, &c) in &numer {
                let (a, b) = (d[i], d[j]);
                if a <= b || c == 0.0 {
                    continue;
                }
                for s in 0..a - b {
                    let mut q = d.clone();
                    q[i] = b + s;
                    q[j] = a - 1 - s;
                    out.add_term(q, c);
                }
            }
        }
    }
    out
}

fn finish(k: usize, full: Polynomial) -> SymPoly {
    full.to_symmetric(SYMMETRY_TOL).unwrap_or_else(|_| {
        // symmetric input always gives symmetric output; fall back to the
        // sorted-exponent reading if rounding trips the check
        let mut out = SymPoly::zero(k);
        for (e, c) in &full.terms {
            if e.windows(2).all(|w| w[0] >= w[1]) {
                out.add_term(Partition::new(e.clone()).expect("sorted"), *c);
            }
        }
        out
    })
}

/// `B1 = Σ ∂_i`.
pub fn apply_b1(p: &SymPoly) -> SymPoly {
    finish(p.num_vars(), first_order(&p.to_polynomial(), 0))
}

/// `B2 = ½ Σ z_i ∂_i² + θ Σ_{i≠j} z_i/(z_i − z_j) ∂_i`.
pub fn apply_b2(p: &SymPoly, theta: f64) -> SymPoly {
    let f = p.to_polynomial();
    let mut out = pure_second(&f, 1).scaled(0.5);
    out.add_assign_scaled(theta, &pair_drift(&f, 1));
    finish(p.num_vars(), out)
}

/// `B3 = Σ z_i ∂_i` (the Euler operator).
pub fn apply_b3(p: &SymPoly) -> SymPoly {
    finish(p.num_vars(), first_order(&p.to_polynomial(), 1))
}

/// The Jack operator `Σ z_i² ∂_i² + 2θ Σ_{i≠j} z_i²/(z_i − z_j) ∂_i`.
pub fn apply_opjack(p: &SymPoly, theta: f64) -> SymPoly {
    let f = p.to_polynomial();
    let mut out = pure_second(&f, 2);
    out.add_assign_scaled(2.0 * theta, &pair_drift(&f, 2));
    finish(p.num_vars(), out)
}

/// Dyson Brownian motion generator `½ Σ ∂_i² + θ Σ_{i≠j} (z_i − z_j)^{-1} ∂_i`.
pub fn apply_a(p: &SymPoly, theta: f64) -> SymPoly {
    let f = p.to_polynomial();
    let mut out = pure_second(&f, 0).scaled(0.5);
    out.add_assign_scaled(theta, &pair_drift(&f, 0));
    finish(p.num_vars(), out)
}

/// Dyson Ornstein-Uhlenbeck generator `A − ½ B3`.
pub fn apply_a_ou(p: &SymPoly, theta: f64) -> SymPoly {
    let f = p.to_polynomial();
    let mut out = pure_second(&f, 0).scaled(0.5);
    out.add_assign_scaled(theta, &pair_drift(&f, 0));
    out.add_assign_scaled(-0.5, &first_order(&f, 1));
    finish(p.num_vars(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffOp {
    B1,
    B2,
    B3,
    OpJack,
    A,
    AOu,
}

impl DiffOp {
    pub fn apply(self, p: &SymPoly, theta: f64) -> SymPoly {
        match self {
            DiffOp::B1 => apply_b1(p),
            DiffOp::B2 => apply_b2(p, theta),
            DiffOp::B3 => apply_b3(p),
            DiffOp::OpJack => apply_opjack(p, theta),
            DiffOp::A => apply_a(p, theta),
            DiffOp::AOu => apply_a_ou(p, theta),
        }
    }
}

impl std::str::FromStr for DiffOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "b1" => DiffOp::B1,
            "b2" => DiffOp::B2,
            "b3" => DiffOp::B3,
            "opjack" | "jack" => DiffOp::OpJack,
            "a" | "dbm" => DiffOp::A,
            "a_ou" | "aou" | "dou" => DiffOp::AOu,
            other => return Err(Error::Config(format!("unknown operator '{other}'"))),
        })
    }
}

/// Jack-basis coefficients of `B1 J_κ` from the lowering formula
/// `J_κ(1) Σ_i binom(κ, κ_(i)) J_{κ_(i)} / J_{κ_(i)}(1)`.
pub fn jack_action_b1(basis: &JackBasis, kappa: &Partition) -> Result<BTreeMap<Partition, f64>> {
    lowering_action(basis, kappa, |_, _| 1.0)
}

/// Jack-basis coefficients of `B2 J_κ`: the `B1` lowering sum with the
/// extra weight `(κ_i − 1 + (k − i)θ)/2` on term `i`.
///
/// The factor ½ matches the `½ Σ z_i ∂_i²` normalization of `B2` (and hence
/// `A = [B1, B2]`); it is checked against [`apply_b2`] in the tests.
pub fn jack_action_b2(basis: &JackBasis, kappa: &Partition) -> Result<BTreeMap<Partition, f64>> {
    let theta = basis.params().theta;
    let k = basis.params().k as f64;
    lowering_action(basis, kappa, |i, part| 0.5 * (part as f64 - 1.0 + (k - i as f64) * theta))
}

fn lowering_action(
    basis: &JackBasis,
    kappa: &Partition,
    weight: impl Fn(usize, u32) -> f64,
) -> Result<BTreeMap<Partition, f64>> {
    let norm = basis.norm(kappa)?;
    let mut out = BTreeMap::new();
    for (i, lowered, binom) in basis.lowering_binomials(kappa)? {
        let c = norm * binom * weight(i, kappa.part(i)) / basis.norm(&lowered)?;
        if c != 0.0 {
            *out.entry(lowered).or_insert(0.0) += c;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Dbm,
    Dou,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dbm" => Ok(GeneratorKind::Dbm),
            "dou" => Ok(GeneratorKind::Dou),
            other => Err(Error::Config(format!("unknown process kind '{other}' (dbm|dou)"))),
        }
    }
}

/// Matrix of a generator on the span of `{J_μ}`: `entries[(ρ, μ)]` is the
/// coefficient of `J_ρ` in the generator applied to `J_μ`. Rows and columns
/// follow the basis index (weight-major, descending), so DBM matrices are
/// strictly lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub basis_index: Vec<Partition>,
    pub entries: DMatrix<f64>,
    pub kind: GeneratorKind,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.basis_index.len()
    }

    pub fn position(&self, mu: &Partition) -> Option<usize> {
        self.basis_index.iter().position(|p| p == mu)
    }

    /// Highest weight in the index.
    pub fn max_weight(&self) -> u32 {
        self.basis_index.iter().map(Partition::weight).max().unwrap_or(0)
    }

    /// CSV with the basis index as header row; row `ρ` column `μ`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for p in &self.basis_index {
            write!(s, ",\"{p}\"").unwrap();
        }
        s.push('\n');
        for (r, p) in self.basis_index.iter().enumerate() {
            write!(s, "\"{p}\"").unwrap();
            for c in 0..self.dim() {
                write!(s, ",{:e}", self.entries[(r, c)]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Closed-form generator matrix on `basis`:
///
/// `A J_κ = ½ J_κ(1) Σ_i Σ_j binom(κ,κ_(i)) binom(κ_(i),(κ_(i))_(j))
///          (κ_i − (κ_(i))_j + (j − i)θ) J_{(κ_(i))_(j)} / J_{(κ_(i))_(j)}(1)`,
///
/// accumulated over all `(i, j)` paths landing on the same partition. For
/// DOU, `½|μ|` is subtracted on the diagonal.
pub fn build_generator_matrix(basis: &JackBasis, kind: GeneratorKind) -> Result<GeneratorMatrix> {
    let theta = basis.params().theta;
    let index = basis.index().to_vec();
    let n = index.len();
    let pos: BTreeMap<&Partition, usize> = index.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut m = DMatrix::zeros(n, n);
    for (col, kappa) in index.iter().enumerate() {
        let norm = basis.norm(kappa)?;
        for (i, first, b1) in basis.lowering_binomials(kappa)? {
            for (j, second, b2) in basis.lowering_binomials(&first)? {
                let w = kappa.part(i) as f64 - first.part(j) as f64 + (j as f64 - i as f64) * theta;
                let row = *pos.get(&second).ok_or_else(|| Error::Unindexed(second.clone()))?;
                m[(row, col)] += 0.5 * norm * b1 * b2 * w / basis.norm(&second)?;
            }
        }
        if kind == GeneratorKind::Dou {
            m[(col, col)] -= 0.5 * kappa.weight() as f64;
        }
    }
    Ok(GeneratorMatrix { basis_index: index, entries: m, kind })
}

/// The same matrix computed by applying the differential operator to each
/// `J_μ` and expanding the image back in the Jack basis.
pub fn generator_matrix_direct(basis: &JackBasis, kind: GeneratorKind) -> Result<GeneratorMatrix> {
    let theta = basis.params().theta;
    let index = basis.index().to_vec();
    let n = index.len();
    let mut m = DMatrix::zeros(n, n);
    for (col, mu) in index.iter().enumerate() {
        let j = basis.poly(mu)?;
        let image = match kind {
            GeneratorKind::Dbm => apply_a(j, theta),
            GeneratorKind::Dou => apply_a_ou(j, theta),
        };
        for (rho, c) in basis.to_jack_basis(&image)? {
            let row = index.iter().position(|p| *p == rho).ok_or(Error::Unindexed(rho))?;
            m[(row, col)] = c;
        }
    }
    Ok(GeneratorMatrix { basis_index: index, entries: m, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jack::{build_jack, JackParams};
    use crate::part;
    use crate::symmpoly::tests_support::arb_sympoly;
    use crate::test_util::assert_maps_close;
    use proptest::prelude::*;

    fn max_diff(a: &SymPoly, b: &SymPoly) -> f64 {
        (a - b).max_abs_coeff()
    }

    #[test]
    fn b1_on_power_sum() {
        for k in 1..=5 {
            let p1 = SymPoly::monomial(k, part![1]).unwrap();
            assert_eq!(apply_b1(&p1), SymPoly::constant(k, k as f64));
        }
    }

    #[test]
    fn drift_of_linear_vanishes() {
        // Σ_{i≠j} 1/(z_i − z_j) = 0, so A p_1 = 0
        for k in 1..=5 {
            let p1 = SymPoly::monomial(k, part![1]).unwrap();
            assert!(apply_a(&p1, 0.7).is_zero());
        }
    }

    #[test]
    fn generator_on_j2_is_constant() {
        // hand computation: ½Σ∂² + θΣ(z_i − z_j)^{-1}∂_i on ((1+θ)/θ)m_(2) + 2m_(1,1)
        for &theta in &[0.25, 0.5, 1.0, 2.0, 3.7] {
            for k in 1..=4 {
                let mut terms = vec![(part![2], (1.0 + theta) / theta)];
                if k > 1 {
                    terms.push((part![1, 1], 2.0));
                }
                let j2 = SymPoly::from_terms(k, terms).unwrap();
                let kf = k as f64;
                let expect = SymPoly::constant(k, kf * (1.0 + kf * theta) / theta);
                assert!(max_diff(&apply_a(&j2, theta), &expect) < 1e-12, "k={k} θ={theta}");
            }
        }
    }

    #[test]
    fn b2_on_power_sum() {
        // θ Σ_{i≠j} z_i/(z_i − z_j) = θ k(k−1)/2
        let theta = 0.8;
        for k in 1..=5 {
            let p1 = SymPoly::monomial(k, part![1]).unwrap();
            let kf = k as f64;
            let expect = SymPoly::constant(k, theta * kf * (kf - 1.0) / 2.0);
            assert!(max_diff(&apply_b2(&p1, theta), &expect) < 1e-13);
        }
    }

    #[test]
    fn b3_scales_by_degree() {
        let p = SymPoly::from_terms(3, [(part![2, 1], 1.5), (part![1], -2.0), (part![], 4.0)]).unwrap();
        let expect = SymPoly::from_terms(3, [(part![2, 1], 4.5), (part![1], -2.0)]).unwrap();
        assert_eq!(apply_b3(&p), expect);
    }

    #[test]
    fn b3_on_jacks() {
        for &theta in &[0.5, 1.0, 2.0] {
            let params = JackParams::new(theta, 3).unwrap();
            for kappa in [part![2, 1], part![3], part![1, 1, 1], part![2, 2, 1]] {
                let j = build_jack(&params, &kappa).unwrap();
                let d = max_diff(&apply_b3(&j), &j.scale(kappa.weight() as f64));
                assert!(d <= 1e-12 * j.max_abs_coeff(), "{kappa}");
            }
        }
    }

    #[test]
    fn closed_form_actions_small_cases() {
        let theta = 0.6;
        for k in 1..=4 {
            let params = JackParams::new(theta, k).unwrap();
            let basis = JackBasis::new(params, &part![1]).unwrap();
            let kf = k as f64;
            assert_maps_close(&jack_action_b1(&basis, &part![1]).unwrap(), &BTreeMap::from([(part![], kf)]), 1e-14);
            let b2 = jack_action_b2(&basis, &part![1]).unwrap();
            let expect = kf * (kf - 1.0) * theta / 2.0;
            if k == 1 {
                assert!(b2.values().all(|v| *v == 0.0));
            } else {
                assert!((b2[&part![]] - expect).abs() < 1e-13 * expect);
            }
            assert!(jack_action_b1(&basis, &part![]).unwrap().is_empty());
            assert!(jack_action_b2(&basis, &part![]).unwrap().is_empty());
        }
    }

    #[test]
    fn closed_form_matches_direct_route() {
        for &theta in &[0.5, 1.0, 2.0] {
            for k in 1..=3 {
                let params = JackParams::new(theta, k).unwrap();
                let kmax = [part![4], part![3, 2], part![3, 2, 1]][k - 1].clone();
                let basis = JackBasis::new(params, &kmax).unwrap();
                for kappa in basis.index() {
                    let j = basis.poly(kappa).unwrap();
                    let b1 = basis.to_jack_basis(&apply_b1(j)).unwrap();
                    let b2 = basis.to_jack_basis(&apply_b2(j, theta)).unwrap();
                    assert_maps_close(&b1, &jack_action_b1(&basis, kappa).unwrap(), 1e-10);
                    assert_maps_close(&b2, &jack_action_b2(&basis, kappa).unwrap(), 1e-10);
                }
            }
        }
    }

    #[test]
    fn generator_matrix_examples() {
        for &theta in &[0.5, 1.0, 2.0] {
            for k in 1..=3 {
                let kf = k as f64;
                let basis = JackBasis::new(JackParams::new(theta, k).unwrap(), &part![1]).unwrap();
                let m = build_generator_matrix(&basis, GeneratorKind::Dbm).unwrap();
                assert_eq!(m.dim(), 2);
                assert!(m.entries.iter().all(|v| *v == 0.0));

                let basis = JackBasis::new(JackParams::new(theta, k).unwrap(), &part![2]).unwrap();
                let m = build_generator_matrix(&basis, GeneratorKind::Dbm).unwrap();
                let (r, c) = (m.position(&part![]).unwrap(), m.position(&part![2]).unwrap());
                let expect = kf * (1.0 + kf * theta) / theta;
                assert!((m.entries[(r, c)] - expect).abs() < 1e-12 * expect);

                let ou = build_generator_matrix(&basis, GeneratorKind::Dou).unwrap();
                assert_eq!(ou.entries[(c, c)], -1.0);
            }
        }
    }

    #[test]
    fn generator_matrix_routes_agree() {
        for &theta in &[0.25, 1.0, 3.7] {
            for k in 1..=3 {
                let kmax = if k == 1 { part![4] } else { part![3, 1] };
                let basis = JackBasis::new(JackParams::new(theta, k).unwrap(), &kmax).unwrap();
                for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
                    let a = build_generator_matrix(&basis, kind).unwrap();
                    let b = generator_matrix_direct(&basis, kind).unwrap();
                    let scale = a.entries.amax().max(1.0);
                    assert!((&a.entries - &b.entries).amax() <= 1e-10 * scale, "θ={theta} k={k} {kind:?}");
                }
            }
        }
    }

    #[test]
    fn dbm_generator_lowers_weight_by_two() {
        let basis = JackBasis::new(JackParams::new(1.3, 3).unwrap(), &part![3, 2, 1]).unwrap();
        let m = build_generator_matrix(&basis, GeneratorKind::Dbm).unwrap();
        for (r, rho) in m.basis_index.iter().enumerate() {
            for (c, mu) in m.basis_index.iter().enumerate() {
                if m.entries[(r, c)] != 0.0 {
                    assert_eq!(rho.weight() + 2, mu.weight(), "{rho} <- {mu}");
                }
            }
        }
        // nilpotent: M^(⌊6/2⌋+1) = 0 exactly by sparsity
        let mut pow = DMatrix::identity(m.dim(), m.dim());
        for _ in 0..4 {
            pow = &pow * &m.entries;
        }
        assert!(pow.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_export_has_header() {
        let basis = JackBasis::new(JackParams::new(1.0, 2).unwrap(), &part![2]).unwrap();
        let m = build_generator_matrix(&basis, GeneratorKind::Dbm).unwrap();
        let csv = m.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "row,\"(2)\",\"(1)\",\"∅\"");
        assert_eq!(csv.lines().count(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn commutator_is_generator(p in arb_sympoly(3, 6), theta in 0.2f64..4.0) {
            let lhs = &apply_b1(&apply_b2(&p, theta)) - &apply_b2(&apply_b1(&p), theta);
            let rhs = apply_a(&p, theta);
            prop_assert!(max_diff(&lhs, &rhs) <= 1e-11 * p.max_abs_coeff());
        }

        #[test]
        fn ou_generator_is_a_minus_half_b3(p in arb_sympoly(3, 5), theta in 0.2f64..4.0) {
            let rhs = &apply_a(&p, theta) - &apply_b3(&p).scale(0.5);
            prop_assert!(max_diff(&apply_a_ou(&p, theta), &rhs) <= 1e-12 * p.max_abs_coeff().max(1.0));
        }
    }
}
