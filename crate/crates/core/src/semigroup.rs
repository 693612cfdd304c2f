//! Exact semigroup action on Jack subspaces and the polynomial-level
//! intertwining checks.
//!
//! On the span of `{J_μ : μ ⊆ κ}` the DBM generator is nilpotent and the DOU
//! generator is lower triangular, so `e^{tM}` is computed structurally: a
//! finite power series for DBM and a Parlett recurrence for DOU.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::jack::{JackBasis, JackParams};
use crate::operators::{apply_a, apply_a_ou, build_generator_matrix, GeneratorKind, GeneratorMatrix};
use crate::partitions::Partition;

/// Absolute tolerance for exact-path checks, scaled by `max(1, max |coef|)`.
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SemigroupAction {
    pub gen: GeneratorMatrix,
    pub t: f64,
    pub expm: DMatrix<f64>,
}

impl SemigroupAction {
    pub fn new(gen: GeneratorMatrix, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("time must be nonnegative, got {t}")));
        }
        let expm = match gen.kind {
            GeneratorKind::Dbm => expm_nilpotent(&gen.entries, t),
            GeneratorKind::Dou => expm_lower_triangular(&gen.entries, t),
        };
        Ok(SemigroupAction { gen, t, expm })
    }

    /// Convenience: closed-form generator on `basis`, then exponentiate.
    pub fn on_basis(basis: &JackBasis, kind: GeneratorKind, t: f64) -> Result<Self> {
        Self::new(build_generator_matrix(basis, kind)?, t)
    }

    pub fn index(&self) -> &[Partition] {
        &self.gen.basis_index
    }
}

/// `Σ_n (tM)^n / n!`, stopping once the term vanishes. For a strictly
/// lower-triangular `M` this terminates after at most `dim` terms.
pub fn expm_nilpotent(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for p in 1..=n {
        term = &term * m * (t / p as f64);
        if term.iter().all(|&x| x == 0.0) {
            break;
        }
        out += &term;
    }
    out
}

/// `e^{tT}` for lower-triangular `T` by Parlett's recurrence.
///
/// Entries coupling two distinct indices with equal diagonal are set to
/// zero: on a Jack subspace such pairs have equal weight, and the generator
/// never connects partitions of the same weight.
pub fn expm_lower_triangular(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let tm = m * t;
    let mut f = DMatrix::zeros(n, n);
    for i in 0..n {
        f[(i, i)] = tm[(i, i)].exp();
    }
    // lower triangle, working outward from the diagonal
    for d in 1..n {
        for j in 0..n - d {
            let i = j + d;
            let denom = tm[(i, i)] - tm[(j, j)];
            if denom.abs() < 1e-14 * (1.0 + tm[(i, i)].abs()) {
                continue;
            }
            let mut s = tm[(i, j)] * (f[(i, i)] - f[(j, j)]);
            for l in j + 1..i {
                s += f[(i, l)] * tm[(l, j)] - tm[(i, l)] * f[(l, j)];
            }
            f[(i, j)] = s / denom;
        }
    }
    f
}

/// Apply the semigroup to Jack coefficients `{μ: a_μ}`.
pub fn semigroup_apply(
    action: &SemigroupAction,
    coeffs: &BTreeMap<Partition, f64>,
) -> Result<BTreeMap<Partition, f64>> {
    let index = action.index();
    let mut v = nalgebra::DVector::zeros(index.len());
    for (mu, &c) in coeffs {
        let pos = action.gen.position(mu).ok_or_else(|| Error::Unindexed(mu.clone()))?;
        v[pos] = c;
    }
    let w = &action.expm * v;
    Ok(index
        .iter()
        .zip(w.iter())
        .filter(|(_, c)| **c != 0.0)
        .map(|(mu, c)| (mu.clone(), *c))
        .collect())
}

/// Jack eigenvalue `c_κ^(k)` of the Dixon–Anderson kernel:
/// `Γ((k+1)θ)/Γ(θ) Π_{i=1}^k Γ((k+1−i)θ+κ_i)/Γ((k+2−i)θ+κ_i)`.
///
/// The Gamma prefactor cancels against the `κ_i = 0` terms, leaving
/// `Π_i (a_i)_{κ_i} / (a_i + θ)_{κ_i}` with `a_i = (k+1−i)θ`; the
/// Pochhammer ratio is accumulated one factor at a time, each below 1.
pub fn kernel_factor(theta: f64, k: usize, kappa: &Partition) -> f64 {
    let mut c = 1.0;
    for i in 1..=k.min(kappa.len()) {
        let a = (k + 1 - i) as f64 * theta;
        for j in 0..kappa.part(i) {
            c *= (a + j as f64) / (a + theta + j as f64);
        }
    }
    c
}

/// The literal log-Gamma form, kept as an independent check.
pub fn kernel_factor_lgamma(theta: f64, k: usize, kappa: &Partition) -> f64 {
    let mut log = ln_gamma((k + 1) as f64 * theta) - ln_gamma(theta);
    for i in 1..=k {
        let ki = kappa.part(i) as f64;
        log += ln_gamma((k + 1 - i) as f64 * theta + ki) - ln_gamma((k + 2 - i) as f64 * theta + ki);
    }
    log.exp()
}

/// `E^x[J_κ(X(t))]` exactly: expand `e^{tM} e_κ` in the Jack basis and
/// evaluate at `x`.
pub fn jack_moment_exact(theta: f64, x: &[f64], kappa: &Partition, t: f64, kind: GeneratorKind) -> Result<f64> {
    let params = JackParams::new(theta, x.len())?;
    params.check_len(kappa)?;
    let basis = JackBasis::new(params, kappa)?;
    let action = SemigroupAction::on_basis(&basis, kind, t)?;
    let coeffs = semigroup_apply(&action, &[(kappa.clone(), 1.0)].into())?;
    basis.from_jack_basis(&coeffs)?.eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub mu: Partition,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntertwiningReport {
    pub theta: f64,
    pub k: usize,
    pub kappa: Partition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<GeneratorKind>,
    pub max_abs_error: f64,
    /// `max(1, max |coefficient|)`; the tolerance is `EXACT_TOL * scale`.
    pub scale: f64,
    pub per_coefficient: Vec<CoefficientRow>,
}

impl IntertwiningReport {
    fn from_sides(
        theta: f64,
        k: usize,
        kappa: &Partition,
        lhs: &BTreeMap<Partition, f64>,
        rhs: &BTreeMap<Partition, f64>,
    ) -> Self {
        let keys: std::collections::BTreeSet<&Partition> = lhs.keys().chain(rhs.keys()).collect();
        let mut rows = Vec::with_capacity(keys.len());
        let mut err: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for mu in keys {
            let l = lhs.get(mu).copied().unwrap_or(0.0);
            let r = rhs.get(mu).copied().unwrap_or(0.0);
            err = err.max((l - r).abs());
            scale = scale.max(l.abs()).max(r.abs());
            rows.push(CoefficientRow { mu: mu.clone(), lhs: l, rhs: r });
        }
        // weight-major, matching generator indexing
        rows.sort_by(|a, b| crate::partitions::weight_major_desc(&a.mu, &b.mu));
        IntertwiningReport {
            theta,
            k,
            kappa: kappa.clone(),
            t: None,
            kind: None,
            max_abs_error: err,
            scale,
            per_coefficient: rows,
        }
    }

    pub fn tolerance(&self) -> f64 {
        EXACT_TOL * self.scale
    }

    pub fn passed(&self) -> bool {
        self.max_abs_error <= self.tolerance()
    }
}

fn bases(theta: f64, k: usize, kappa: &Partition) -> Result<(JackBasis, JackBasis)> {
    let small = JackParams::new(theta, k)?;
    small.check_len(kappa)?;
    let big = JackParams::new(theta, k + 1)?;
    let lo = JackBasis::new(small, kappa)?;
    let hi = JackBasis::new(big, kappa)?;
    // lowering never increases length, so both index sets are the
    // sub-partitions of κ with length ≤ k
    debug_assert_eq!(lo.index(), hi.index());
    Ok((lo, hi))
}

/// Compares `L^(k) P^(k)(t) J_κ` with `P^(k+1)(t) L^(k) J_κ` on Jack
/// coefficients. LHS is `{a_μ(t) c_μ^(k)}`, RHS is `{c_κ^(k) b_μ(t)}`, with
/// `a`, `b` the k- and (k+1)-variable semigroup images of `J_κ`.
pub fn verify_intertwining_exact(
    theta: f64,
    k: usize,
    kappa: &Partition,
    t: f64,
    kind: GeneratorKind,
) -> Result<IntertwiningReport> {
    let (lo, hi) = bases(theta, k, kappa)?;
    let start: BTreeMap<Partition, f64> = [(kappa.clone(), 1.0)].into();
    let a = semigroup_apply(&SemigroupAction::on_basis(&lo, kind, t)?, &start)?;
    let b = semigroup_apply(&SemigroupAction::on_basis(&hi, kind, t)?, &start)?;
    let ck = kernel_factor(theta, k, kappa);
    let lhs = a.iter().map(|(mu, v)| (mu.clone(), v * kernel_factor(theta, k, mu))).collect();
    let rhs = b.iter().map(|(mu, v)| (mu.clone(), ck * v)).collect();
    let mut rep = IntertwiningReport::from_sides(theta, k, kappa, &lhs, &rhs);
    rep.t = Some(t);
    rep.kind = Some(kind);
    Ok(rep)
}

/// Compares `L^(k) A^(k) J_κ` with `A^(k+1) L^(k) J_κ`. Both generator
/// images come from the direct differential route, independently of the
/// closed-form matrices used by [`verify_intertwining_exact`].
pub fn verify_generator_intertwining(theta: f64, k: usize, kappa: &Partition) -> Result<IntertwiningReport> {
    let (lo, hi) = bases(theta, k, kappa)?;
    let img_lo = lo.to_jack_basis(&apply_a(lo.poly(kappa)?, theta))?;
    let img_hi = hi.to_jack_basis(&apply_a(hi.poly(kappa)?, theta))?;
    let ck = kernel_factor(theta, k, kappa);
    let lhs = img_lo.iter().map(|(mu, v)| (mu.clone(), v * kernel_factor(theta, k, mu))).collect();
    let rhs = img_hi.iter().map(|(mu, v)| (mu.clone(), ck * v)).collect();
    Ok(IntertwiningReport::from_sides(theta, k, kappa, &lhs, &rhs))
}

/// Same as [`verify_generator_intertwining`] for the DOU generator.
pub fn verify_generator_intertwining_ou(theta: f64, k: usize, kappa: &Partition) -> Result<IntertwiningReport> {
    let (lo, hi) = bases(theta, k, kappa)?;
    let img_lo = lo.to_jack_basis(&apply_a_ou(lo.poly(kappa)?, theta))?;
    let img_hi = hi.to_jack_basis(&apply_a_ou(hi.poly(kappa)?, theta))?;
    let ck = kernel_factor(theta, k, kappa);
    let lhs = img_lo.iter().map(|(mu, v)| (mu.clone(), v * kernel_factor(theta, k, mu))).collect();
    let rhs = img_hi.iter().map(|(mu, v)| (mu.clone(), ck * v)).collect();
    Ok(IntertwiningReport::from_sides(theta, k, kappa, &lhs, &rhs))
}

/// `max |M1 e^{tM2} − e^{tM3} M1|` with `M1 = diag(c_μ^(k))` and `M2`, `M3`
/// the k- and (k+1)-variable generator matrices, relative to
/// `max(1, max |entry|)`.
pub fn lemma_matrix_check(theta: f64, k: usize, kappa: &Partition, t: f64, kind: GeneratorKind) -> Result<f64> {
    let (lo, hi) = bases(theta, k, kappa)?;
    let m1 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lo.index().len(),
        lo.index().iter().map(|mu| kernel_factor(theta, k, mu)),
    ));
    let e2 = SemigroupAction::on_basis(&lo, kind, t)?.expm;
    let e3 = SemigroupAction::on_basis(&hi, kind, t)?.expm;
    Ok(relative_gap(&(&m1 * e2), &(e3 * &m1)))
}

/// Two-step version through `k → k+1 → k+2`: the composed kernel has
/// eigenvalue `c_μ^(k) c_μ^(k+1)` and must intertwine `P^(k)` with
/// `P^(k+2)`.
pub fn iterated_check(theta: f64, k: usize, kappa: &Partition, t: f64, kind: GeneratorKind) -> Result<f64> {
    let p0 = JackParams::new(theta, k)?;
    p0.check_len(kappa)?;
    let lo = JackBasis::new(p0, kappa)?;
    let top = JackBasis::new(JackParams::new(theta, k + 2)?, kappa)?;
    let m1 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lo.index().len(),
        lo.index().iter().map(|mu| kernel_factor(theta, k, mu) * kernel_factor(theta, k + 1, mu)),
    ));
    let e_lo = SemigroupAction::on_basis(&lo, kind, t)?.expm;
    let e_top = SemigroupAction::on_basis(&top, kind, t)?.expm;
    Ok(relative_gap(&(&m1 * e_lo), &(e_top * &m1)))
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.iter().chain(b.iter()).fold(1.0_f64, |s, x| s.max(x.abs()));
    (a - b).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::part;
    use crate::symmpoly::SymPoly;
    use crate::test_util::assert_maps_close;
    use proptest::prelude::*;

    fn basis(theta: f64, k: usize, kappa: Partition) -> JackBasis {
        JackBasis::new(JackParams::new(theta, k).unwrap(), &kappa).unwrap()
    }

    #[test]
    fn jack_moment_of_p1_and_p2() {
        // E[p_1] is conserved; E[p_2] grows at the squared-Bessel rate
        let x = [-0.3, 0.4, 1.1];
        let theta = 0.7;
        let p1 = jack_moment_exact(theta, &x, &part![1], 2.0, GeneratorKind::Dbm).unwrap();
        assert!((p1 - 1.2).abs() < 1e-12);
        let b = JackBasis::up_to_degree(JackParams::new(theta, 3).unwrap(), 2).unwrap();
        let p2 = SymPoly::monomial(3, part![2]).unwrap();
        let c = b.to_jack_basis(&p2).unwrap();
        let t = 0.8;
        let lhs: f64 = c.iter().map(|(mu, v)| v * jack_moment_exact(theta, &x, mu, t, GeneratorKind::Dbm).unwrap()).sum();
        let delta = 2.0 * theta * 3.0 + 3.0;
        assert!((lhs - (1.46 + delta * t)).abs() < 1e-10, "{lhs}");
    }

    #[test]
    fn kernel_factor_examples() {
        for &theta in &[0.25, 0.5, 1.0, 2.0, 3.7] {
            for k in 1..=5 {
                assert!((kernel_factor(theta, k, &Partition::empty()) - 1.0).abs() < 1e-13);
                let c1 = kernel_factor(theta, k, &part![1]);
                assert!((c1 - k as f64 / (k + 1) as f64).abs() < 1e-13);
            }
            let c2 = kernel_factor(theta, 1, &part![2]);
            assert!((c2 - (theta + 1.0) / (2.0 * (2.0 * theta + 1.0))).abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_factor_matches_gamma_form() {
        for &theta in &[0.25, 0.5, 1.0, 2.0, 3.7] {
            for k in 1..=4 {
                for kappa in part![4, 2, 1].sub_partitions(k) {
                    let (a, b) = (kernel_factor(theta, k, &kappa), kernel_factor_lgamma(theta, k, &kappa));
                    assert!((a - b).abs() < 1e-11 * b, "{kappa} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn kernel_factor_in_unit_interval() {
        for &theta in &[0.25, 1.0, 3.7] {
            for k in 1..=4 {
                for kappa in part![3, 2, 1].sub_partitions(k) {
                    let c = kernel_factor(theta, k, &kappa);
                    assert!(c > 0.0 && c <= 1.0, "{kappa} {c}");
                }
            }
        }
    }

    #[test]
    fn time_zero_is_identity() {
        let b = basis(0.7, 3, part![2, 1]);
        for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
            let act = SemigroupAction::on_basis(&b, kind, 0.0).unwrap();
            assert_eq!(act.expm, DMatrix::identity(b.index().len(), b.index().len()));
        }
    }

    #[test]
    fn dbm_single_step_on_j2() {
        for k in 1..=4 {
            for &theta in &[0.5, 1.0, 2.0] {
                let b = basis(theta, k, part![2]);
                let t = 0.37;
                let act = SemigroupAction::on_basis(&b, GeneratorKind::Dbm, t).unwrap();
                let out = semigroup_apply(&act, &[(part![2], 1.0)].into()).unwrap();
                let expect = [(part![2], 1.0), (Partition::empty(), t * k as f64 * (1.0 + k as f64 * theta) / theta)].into();
                assert_maps_close(&out, &expect, 1e-12);
            }
        }
    }

    #[test]
    fn p1_is_a_martingale() {
        let b = basis(0.3, 3, part![1]);
        let act = SemigroupAction::on_basis(&b, GeneratorKind::Dbm, 4.0).unwrap();
        let out = semigroup_apply(&act, &[(part![1], 1.0)].into()).unwrap();
        assert_eq!(out, [(part![1], 1.0)].into());
    }

    #[test]
    fn unindexed_partition_errors() {
        let b = basis(1.0, 2, part![2]);
        let act = SemigroupAction::on_basis(&b, GeneratorKind::Dbm, 1.0).unwrap();
        assert!(matches!(semigroup_apply(&act, &[(part![3], 1.0)].into()), Err(Error::Unindexed(_))));
    }

    #[test]
    fn dbm_expm_is_unit_lower_triangular() {
        let b = basis(1.3, 3, part![3, 2, 1]);
        let e = SemigroupAction::on_basis(&b, GeneratorKind::Dbm, 2.0).unwrap().expm;
        for i in 0..e.nrows() {
            assert_eq!(e[(i, i)], 1.0);
            for j in i + 1..e.ncols() {
                assert_eq!(e[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn dou_matches_time_changed_dbm() {
        // weight drops by exactly 2 under M, so
        // e^{t(M − D/2)} = e^{−tD/2} e^{(1 − e^{−t}) M}
        for &theta in &[0.25, 1.0, 3.7] {
            let b = basis(theta, 3, part![3, 1]);
            let dbm = build_generator_matrix(&b, GeneratorKind::Dbm).unwrap();
            for &t in &[0.1, 1.0, 5.0] {
                let dou = SemigroupAction::on_basis(&b, GeneratorKind::Dou, t).unwrap().expm;
                let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    b.index().len(),
                    b.index().iter().map(|mu| (-0.5 * t * mu.weight() as f64).exp()),
                ));
                let expect = d * expm_nilpotent(&dbm.entries, 1.0 - (-t).exp());
                assert!(relative_gap(&dou, &expect) < 1e-13, "θ={theta} t={t}");
            }
        }
    }

    #[test]
    fn dou_diagonal() {
        let b = basis(0.6, 2, part![2, 2]);
        let e = SemigroupAction::on_basis(&b, GeneratorKind::Dou, 1.5).unwrap().expm;
        for (i, mu) in b.index().iter().enumerate() {
            assert!((e[(i, i)] - (-0.75 * mu.weight() as f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn dou_generator_is_dbm_minus_half_weight() {
        let b = basis(2.0, 3, part![2, 2]);
        let dbm = build_generator_matrix(&b, GeneratorKind::Dbm).unwrap();
        let mut dou = build_generator_matrix(&b, GeneratorKind::Dou).unwrap();
        for (i, mu) in b.index().iter().enumerate() {
            dou.entries[(i, i)] += 0.5 * mu.weight() as f64;
        }
        assert_eq!(dou.entries, dbm.entries);
    }

    #[test]
    fn semigroup_property() {
        let b = basis(0.45, 3, part![3, 1]);
        for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
            let e = |t| SemigroupAction::on_basis(&b, kind, t).unwrap().expm;
            let (s, t) = (0.4, 1.3);
            assert!(relative_gap(&e(s + t), &(e(s) * e(t))) < 1e-11);
        }
    }

    #[test]
    fn exact_intertwining_examples() {
        for k in 1..=4 {
            let r = verify_intertwining_exact(0.8, k, &part![1], 2.0, GeneratorKind::Dbm).unwrap();
            assert_eq!(r.per_coefficient.len(), 1);
            assert!((r.per_coefficient[0].lhs - k as f64 / (k + 1) as f64).abs() < 1e-14);
            assert!(r.max_abs_error < 1e-15);
        }
        let r = verify_intertwining_exact(1.0, 1, &part![2], 1.0, GeneratorKind::Dbm).unwrap();
        assert!(r.max_abs_error <= 1e-10, "{r:?}");
        let r = verify_intertwining_exact(2.0, 3, &part![2, 1], 0.0, GeneratorKind::Dou).unwrap();
        assert!(r.max_abs_error <= 1e-12);
    }

    #[test]
    fn generator_intertwining_examples() {
        let r = verify_generator_intertwining(0.9, 2, &part![1]).unwrap();
        assert!(r.per_coefficient.iter().all(|c| c.lhs == 0.0 && c.rhs == 0.0));
        let r = verify_generator_intertwining(0.5, 2, &part![2]).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = verify_generator_intertwining(2.0, 3, &part![2, 2]).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(verify_generator_intertwining_ou(0.25, 2, &part![3, 1]).unwrap().passed());
    }

    #[test]
    fn too_long_kappa_errors() {
        assert!(verify_intertwining_exact(1.0, 1, &part![1, 1], 1.0, GeneratorKind::Dbm).is_err());
    }

    #[test]
    fn lemma_and_iterated() {
        for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
            assert!(lemma_matrix_check(0.25, 2, &part![2, 1], 1.0, kind).unwrap() < 1e-10);
            assert!(iterated_check(1.7, 2, &part![2, 2], 1.0, kind).unwrap() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn intertwining_holds(theta in 0.2f64..4.0, k in 1usize..=3, t in 0.0f64..5.0, dou in any::<bool>(),
                              which in 0usize..5) {
            let kappas = [part![1], part![2], part![1, 1], part![2, 1], part![3]];
            let kappa = &kappas[which];
            prop_assume!(kappa.len() <= k);
            let kind = if dou { GeneratorKind::Dou } else { GeneratorKind::Dbm };
            let r = verify_intertwining_exact(theta, k, kappa, t, kind).unwrap();
            prop_assert!(r.passed(), "{:?}", r);
        }
    }
}
