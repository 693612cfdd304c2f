//! Random-matrix realization at β = 1: a Haar-rotated spectrum, symmetric
//! matrix Brownian motion, and the spectrum of the top-left corner.
//!
//! With diagonal increments of variance `t` and off-diagonal increments of
//! variance `t/2`, the eigenvalues of `M(t)` follow the β = 1 Dyson equation
//! with unit noise, and the corner eigenvalues given the full spectrum have
//! the Dixon–Anderson law with θ = 1/2.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dixon_anderson::{DaSampler, OrderedVector};
use crate::error::{Error, Result};
use crate::sde::{antithetic_mc, PipelineStat, Process, SdeConfig, StatSet, Statistic};
use crate::stats::{par_chunks, tags, Accumulator, Rng};

/// Variance convention for the entries of matrix Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Diagonal variance `t`, off-diagonal `t/2`: orthogonally invariant,
    /// eigenvalues are β = 1 Dyson Brownian motion.
    Goe,
    /// Every upper-triangular entry (diagonal included) gets variance `t`.
    AllUnit,
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "goe" => Ok(Convention::Goe),
            "all_unit" | "unit" => Ok(Convention::AllUnit),
            other => Err(Error::Config(format!("unknown convention '{other}' (goe|all_unit)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrixState {
    pub entries: DMatrix<f64>,
    pub time: f64,
}

impl SymMatrixState {
    /// Copies the upper triangle onto the lower one.
    fn symmetrize(&mut self) {
        let n = self.entries.nrows();
        for j in 0..n {
            for i in j + 1..n {
                self.entries[(i, j)] = self.entries[(j, i)];
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn spectrum(&self) -> Result<OrderedVector> {
        sym_eigenvalues(self.entries.clone())
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sym_eigenvalues(m: DMatrix<f64>) -> Result<OrderedVector> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entries".into()));
    }
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    OrderedVector::from_unsorted(eig.eigenvalues.iter().copied().collect())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` multiplied by `sign(R_ii)`.
pub fn haar_orthogonal(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
        let qr = g.qr();
        let r = qr.r();
        if (0..n).any(|i| r[(i, i)] == 0.0) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return q;
    }
}

/// `O diag(x_top) Oᵀ` with Haar `O`.
pub fn embed_spectrum(x_top: &OrderedVector, rng: &mut Rng) -> SymMatrixState {
    let n = x_top.dim();
    let o = haar_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(x_top.values()));
    let mut s = SymMatrixState { entries: &o * d * o.transpose(), time: 0.0 };
    s.symmetrize();
    s
}

/// Adds an exact Gaussian increment of duration `t` to every entry on or
/// above the diagonal and mirrors it.
pub fn evolve_matrix_bm(state: &SymMatrixState, t: f64, convention: Convention, rng: &mut Rng) -> SymMatrixState {
    let n = state.dim();
    let mut s = state.clone();
    let sd_diag = t.sqrt();
    let sd_off = match convention {
        Convention::Goe => (0.5 * t).sqrt(),
        Convention::AllUnit => t.sqrt(),
    };
    for j in 0..n {
        for i in 0..=j {
            let sd = if i == j { sd_diag } else { sd_off };
            s.entries[(i, j)] += sd * normal(rng);
        }
    }
    s.symmetrize();
    s.time += t;
    s
}

/// Ordered eigenvalues of the leading `k × k` block.
pub fn corner_spectrum(state: &SymMatrixState, k: usize) -> Result<OrderedVector> {
    if k > state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: k });
    }
    sym_eigenvalues(state.entries.view((0, 0), (k, k)).into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub k: usize,
    pub t: f64,
    pub x_top: OrderedVector,
    pub convention: Convention,
    pub paths: usize,
    /// Corner pipeline (embed → evolve → corner) as `lhs`; β = 1 DBM of the
    /// spectrum followed by the θ = 1/2 kernel as `rhs`.
    pub stats: Vec<PipelineStat>,
    pub interlacing_violations: u64,
}

impl CornerReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }
}

/// Both routes to the law of the k×k corner spectrum at time `t`, starting
/// from spectrum `x_top` (dimension `k+1`).
pub fn corner_check(
    x_top: &OrderedVector,
    t: f64,
    convention: Convention,
    sde: &SdeConfig,
    stats: &[Statistic],
) -> Result<CornerReport> {
    x_top.require_strict()?;
    let k = x_top.dim() - 1;
    let set = StatSet::new(stats, 0.5, k)?;
    let cfg = SdeConfig { beta: 1.0, t_final: t, ..sde.clone() };
    cfg.validate()?;

    let parts = par_chunks(cfg.paths, cfg.workers, cfg.seed, tags::RMT_CORNER, |len, rng| -> Result<_> {
        let mut acc = vec![Accumulator::default(); set.len()];
        let mut out = vec![0.0; set.len()];
        let mut violations = 0u64;
        for _ in 0..len {
            let m = evolve_matrix_bm(&embed_spectrum(x_top, rng), t, convention, rng);
            let full = m.spectrum()?;
            let corner = corner_spectrum(&m, k)?;
            // eigensolver accuracy is relative to the matrix norm
            let tol = 1e-12 * m.entries.amax().max(1.0) * (k + 1) as f64;
            let f = full.values();
            let ok = corner.values().iter().enumerate().all(|(i, &c)| f[i] - tol <= c && c <= f[i + 1] + tol);
            if !ok {
                violations += 1;
            }
            set.eval(corner.values(), &mut out);
            for (a, &v) in acc.iter_mut().zip(&out) {
                a.push(v);
            }
        }
        Ok((acc, violations))
    });
    let mut lhs = vec![Accumulator::default(); set.len()];
    let mut violations = 0;
    for p in parts {
        let (acc, v) = p?;
        violations += v;
        for (l, a) in lhs.iter_mut().zip(&acc) {
            l.merge(a);
        }
    }

    let sampler = DaSampler::new(0.5)?;
    let (steps, _) = cfg.steps();
    let top = x_top.values();
    let rhs = antithetic_mc(
        Process::Dbm,
        k + 1,
        &cfg,
        &[steps],
        set.len(),
        tags::RMT_DBM,
        |_, start| {
            start.copy_from_slice(top);
            Ok(())
        },
        |_, y, rng, out| {
            let mut end = OrderedVector::new(y.to_vec())?;
            if end.require_strict().is_err() {
                end = end.separate_ties(crate::sde::TIE_JITTER * (y[k] - y[0]).max(1.0));
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
        .map(|(name, (l, r))| {
            let l = l.estimate();
            PipelineStat { name, lhs: l, rhs: *r, z: l.z_between(r) }
        })
        .collect();
    Ok(CornerReport { k, t, x_top: x_top.clone(), convention, paths: cfg.paths, stats, interlacing_violations: violations })
}

#[cfg(feature = "hermitian")]
pub mod hermitian {
    //! β = 2 mirror: Haar unitary conjugation and Hermitian matrix Brownian
    //! motion (diagonal variance `t`, real and imaginary parts of each
    //! off-diagonal entry variance `t/2`), whose spectrum is β = 2 Dyson
    //! Brownian motion.

    use nalgebra::{Complex, DMatrix};

    use super::normal;
    use crate::dixon_anderson::OrderedVector;
    use crate::error::{Error, Result};
    use crate::stats::Rng;

    pub type C = Complex<f64>;

    #[derive(Debug, Clone, PartialEq)]
    pub struct HermMatrixState {
        pub entries: DMatrix<C>,
        pub time: f64,
    }

    impl HermMatrixState {
        fn hermitize(&mut self) {
            let n = self.entries.nrows();
            for j in 0..n {
                self.entries[(j, j)].im = 0.0;
                for i in j + 1..n {
                    self.entries[(i, j)] = self.entries[(j, i)].conj();
                }
            }
        }

        pub fn spectrum(&self) -> Result<OrderedVector> {
            herm_eigenvalues(self.entries.clone())
        }
    }

    fn herm_eigenvalues(m: DMatrix<C>) -> Result<OrderedVector> {
        if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Eigen("non-finite matrix entries".into()));
        }
        let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen("Hermitian eigensolver did not converge".into()))?;
        OrderedVector::from_unsorted(eig.eigenvalues.iter().copied().collect())
    }

    /// Haar unitary: QR of a complex Gaussian matrix, columns rephased by
    /// `R_ii/|R_ii|`.
    pub fn haar_unitary(n: usize, rng: &mut Rng) -> DMatrix<C> {
        loop {
            let g = DMatrix::from_fn(n, n, |_, _| C::new(normal(rng), normal(rng)));
            let qr = g.qr();
            let r = qr.r();
            if (0..n).any(|i| r[(i, i)].norm() == 0.0) {
                continue;
            }
            let mut q = qr.q();
            for j in 0..n {
                let phase = r[(j, j)] / r[(j, j)].norm();
                for i in 0..n {
                    q[(i, j)] *= phase;
                }
            }
            return q;
        }
    }

    pub fn embed_spectrum(x_top: &OrderedVector, rng: &mut Rng) -> HermMatrixState {
        let n = x_top.dim();
        let u = haar_unitary(n, rng);
        let d = DMatrix::from_fn(n, n, |i, j| if i == j { C::new(x_top.values()[i], 0.0) } else { C::new(0.0, 0.0) });
        let mut s = HermMatrixState { entries: &u * d * u.adjoint(), time: 0.0 };
        s.hermitize();
        s
    }

    pub fn evolve_matrix_bm(state: &HermMatrixState, t: f64, rng: &mut Rng) -> HermMatrixState {
        let n = state.entries.nrows();
        let mut s = state.clone();
        let sd_off = (0.5 * t).sqrt();
        for j in 0..n {
            for i in 0..=j {
                if i == j {
                    s.entries[(i, i)].re += t.sqrt() * normal(rng);
                } else {
                    s.entries[(i, j)] += C::new(sd_off * normal(rng), sd_off * normal(rng));
                }
            }
        }
        s.hermitize();
        s.time += t;
        s
    }

    pub fn corner_spectrum(state: &HermMatrixState, k: usize) -> Result<OrderedVector> {
        let n = state.entries.nrows();
        if k > n {
            return Err(Error::DimensionMismatch { expected: n, got: k });
        }
        herm_eigenvalues(state.entries.view((0, 0), (k, k)).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::default_pipeline_stats;
    use crate::stats::{mc_vector, stream};

    fn ov(v: &[f64]) -> OrderedVector {
        OrderedVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = stream(1, 0, 0);
        for n in 1..6 {
            let q = haar_orthogonal(n, &mut rng);
            let e = q.transpose() * &q - DMatrix::identity(n, n);
            assert!(e.amax() < 1e-12);
        }
    }

    #[test]
    fn haar_n1_is_a_fair_sign() {
        let mut rng = stream(2, 0, 0);
        let n = 20000;
        let plus = (0..n).filter(|_| haar_orthogonal(1, &mut rng)[(0, 0)] > 0.0).count();
        assert!(((plus as f64) - n as f64 / 2.0).abs() < 4.0 * (n as f64 / 4.0).sqrt());
    }

    #[test]
    fn haar_first_column_on_sphere() {
        let n = 4;
        let est = mc_vector(40000, 2 * n, 4, 3, 0, |rng, out| {
            let q = haar_orthogonal(n, rng);
            for i in 0..n {
                out[i] = q[(i, 0)];
                out[n + i] = q[(i, 0)] * q[(i, 0)];
            }
        });
        for i in 0..n {
            assert!(est[i].z_against(0.0).abs() < 4.0);
            assert!(est[n + i].z_against(1.0 / n as f64).abs() < 4.0);
        }
    }

    #[test]
    fn embedding_preserves_spectrum_and_interlaces() {
        let mut rng = stream(4, 0, 0);
        let top = ov(&[-1.0, 0.0, 0.0, 2.5]);
        for _ in 0..50 {
            let s = embed_spectrum(&top, &mut rng);
            assert_eq!(s.entries, s.entries.transpose());
            let sp = s.spectrum().unwrap();
            for (a, b) in sp.values().iter().zip(top.values()) {
                assert!((a - b).abs() < 1e-10);
            }
            let c = corner_spectrum(&s, 3).unwrap();
            assert!(c.values().iter().enumerate().all(|(i, &v)| top.values()[i] - 1e-10 <= v && v <= top.values()[i + 1] + 1e-10));
        }
    }

    #[test]
    fn corner_of_diagonal() {
        let s = SymMatrixState { entries: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 5.0])), time: 0.0 };
        assert_eq!(corner_spectrum(&s, 1).unwrap().values(), &[3.0]);
    }

    #[test]
    fn evolve_zero_is_identity() {
        let mut rng = stream(5, 0, 0);
        let s = embed_spectrum(&ov(&[0.0, 1.0, 2.0]), &mut rng);
        assert_eq!(evolve_matrix_bm(&s, 0.0, Convention::Goe, &mut rng).entries, s.entries);
    }

    #[test]
    fn corner_mean_matches_kernel_factor() {
        let top = ov(&[0.0, 1.0, 4.0]);
        let est = mc_vector(20000, 1, 4, 6, 0, |rng, out| {
            out[0] = corner_spectrum(&embed_spectrum(&top, rng), 2).unwrap().sum();
        });
        assert!(est[0].z_against(2.0 / 3.0 * 5.0).abs() < 4.0);
    }

    #[test]
    fn squared_radius_slope_of_spectrum() {
        // β = 1, n = 3: slope 1·3 + 3 = 6 under the GOE convention
        let top = ov(&[-1.0, 0.0, 1.5]);
        let r0: f64 = top.values().iter().map(|v| v * v).sum();
        let t = 0.5;
        let goe = mc_vector(20000, 1, 4, 7, 0, |rng, out| {
            let s = evolve_matrix_bm(&embed_spectrum(&top, rng), t, Convention::Goe, rng);
            out[0] = s.spectrum().unwrap().values().iter().map(|v| v * v).sum::<f64>() - r0;
        });
        assert!(goe[0].z_against(6.0 * t).abs() < 4.0, "{:?}", goe[0]);
        // the literal convention has slope 3 + 2·3 = 9: off by a lot
        let unit = mc_vector(20000, 1, 4, 7, 0, |rng, out| {
            let s = evolve_matrix_bm(&embed_spectrum(&top, rng), t, Convention::AllUnit, rng);
            out[0] = s.spectrum().unwrap().values().iter().map(|v| v * v).sum::<f64>() - r0;
        });
        assert!(unit[0].z_against(6.0 * t).abs() > 10.0);
    }

    #[test]
    fn corner_check_small() {
        let sde = SdeConfig { paths: 6000, dt: 5e-3, ..SdeConfig::new(1.0, 0.5, 8) };
        let r = corner_check(&ov(&[-1.0, 0.5, 2.0]), 0.5, Convention::Goe, &sde, &default_pipeline_stats()).unwrap();
        assert_eq!(r.interlacing_violations, 0);
        assert!(r.max_abs_z() < 4.0, "{r:?}");
    }

    #[test]
    fn rotation_invariance() {
        let top = ov(&[-1.0, 0.5, 2.0]);
        let fixed = haar_orthogonal(3, &mut stream(99, 0, 0));
        let run = |rotate: bool, seed| {
            mc_vector(20000, 1, 4, seed, 0, |rng, out| {
                let mut s = embed_spectrum(&top, rng);
                if rotate {
                    s.entries = &fixed * &s.entries * fixed.transpose();
                    s.symmetrize();
                }
                let s = evolve_matrix_bm(&s, 0.5, Convention::Goe, rng);
                out[0] = corner_spectrum(&s, 2).unwrap().values().iter().map(|v| v * v).sum();
            })[0]
        };
        assert!(run(false, 10).z_between(&run(true, 11)).abs() < 4.0);
    }

    #[cfg(feature = "hermitian")]
    #[test]
    fn hermitian_mirror() {
        use super::hermitian::*;
        let mut rng = stream(12, 0, 0);
        let u = haar_unitary(3, &mut rng);
        assert!((u.adjoint() * &u - DMatrix::identity(3, 3)).camax() < 1e-12);
        let top = ov(&[0.0, 1.0, 3.0]);
        let s = embed_spectrum(&top, &mut rng);
        for (a, b) in s.spectrum().unwrap().values().iter().zip(top.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        // β = 2, n = 3: squared-radius slope 2·3 + 3 = 9
        let r0 = 10.0;
        let est = mc_vector(20000, 2, 4, 13, 0, |rng, out| {
            let m = evolve_matrix_bm(&embed_spectrum(&top, rng), 0.5, rng);
            out[0] = m.spectrum().unwrap().values().iter().map(|v| v * v).sum::<f64>() - r0;
            out[1] = corner_spectrum(&m, 2).unwrap().sum();
        });
        assert!(est[0].z_against(4.5).abs() < 4.0, "{:?}", est[0]);
        assert!(est[1].z_against(2.0 / 3.0 * 4.0).abs() < 4.0, "{:?}", est[1]);
    }
}
