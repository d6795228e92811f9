//! Conditional expectations onto decomposed algebras, their dual state
//! extensions, and the non-square CPTP factorizations through the reduced
//! block algebra `⊕_l B(C^{d_S,l})`.

use crate::algebra::{BlockDecomposition, MatrixAlgebra};
use crate::channels::Superoperator;
use crate::error::{QhmError, Result};
use crate::linalg::{creal, cplx, hermitian_eigen, partial_trace_first, CMatrix, CVector, Operator};
use crate::model::{block_offsets, off_block_norm};
use crate::scalar::Real;

/// `E|_A` and its dual `J|_A = E^†` for a unital decomposed algebra and a
/// choice of full-rank factor states.
#[derive(Clone, Debug)]
pub struct ConditionalExpectation<T: Real> {
    algebra: MatrixAlgebra<T>,
    factor_states: Vec<Operator<T>>,
    e: Superoperator<T>,
    j: Superoperator<T>,
}

/// `J ∘ R = J|_A`, `J0 ∘ R0 = E|_A`, with `R, J` CPTP and `R0 = J^†`,
/// `J0 = R^†` CP unital.
#[derive(Clone, Debug)]
pub struct Factorization<T: Real> {
    pub r: Superoperator<T>,
    pub j: Superoperator<T>,
    pub r0: Superoperator<T>,
    pub j0: Superoperator<T>,
    /// `d_S` per block: the reduced space is `⊕_l B(C^{d_S,l})`, embedded
    /// block-diagonally in `B(C^{m_S})`.
    pub mask: Vec<usize>,
}

impl<T: Real> Factorization<T> {
    /// `m_S = Σ_l d_S,l`.
    pub fn reduced_side(&self) -> usize {
        self.mask.iter().sum()
    }

    /// `Σ_l d_S,l^2`.
    pub fn reduced_dim(&self) -> usize {
        self.mask.iter().map(|d| d * d).sum()
    }

    /// Rejects reduced operators with weight outside the block mask.
    pub fn check_mask(&self, x: &Operator<T>, tol: T) -> Result<()> {
        let off = off_block_norm(&self.mask, x);
        if off > tol * x.norm().max(T::one()) {
            return Err(QhmError::SupportViolation(off.as_f64()));
        }
        Ok(())
    }

    /// Orthonormal matrix units spanning the reduced block algebra.
    pub fn reduced_basis(&self) -> Vec<Operator<T>> {
        let m = self.reduced_side();
        let mut out = Vec::with_capacity(self.reduced_dim());
        for (&o, &d) in block_offsets(&self.mask).iter().zip(&self.mask) {
            for i in 0..d {
                for k in 0..d {
                    let mut x = CMatrix::zeros(m, m);
                    x[(o + i, o + k)] = creal(T::one());
                    out.push(Operator::from(x));
                }
            }
        }
        out
    }

    /// Largest `‖R(J(x)) - x‖` over the reduced matrix units.
    pub fn left_inverse_residual(&self) -> Result<T> {
        let mut worst = T::zero();
        for x in self.reduced_basis() {
            let back = self.r.apply(&self.j.apply(&x)?)?;
            worst = worst.max((back.matrix() - x.matrix()).norm());
        }
        Ok(worst)
    }
}

fn check_factor_state<T: Real>(tau: &Operator<T>, df: usize, block: usize, tol: T) -> Result<()> {
    let fail = |reason: String| QhmError::FactorState { block, reason };
    if tau.dim() != df {
        return Err(fail(format!("expected dimension {df}, got {}", tau.dim())));
    }
    tau.check_density(tol).map_err(|e| fail(e.to_string()))?;
    if !tau.is_positive_definite(tol) {
        return Err(fail(format!(
            "rank deficient (smallest eigenvalue {:.3e})",
            tau.min_eigenvalue().as_f64()
        )));
    }
    Ok(())
}

/// Isometry `V_l` (`d_S d_F x n`) and the `(d_S, d_F)` pair of every block.
fn isometries<T: Real>(dec: &BlockDecomposition<T>) -> Vec<(CMatrix<T>, usize, usize)> {
    (0..dec.blocks.len())
        .map(|l| {
            let (ds, df) = dec.blocks[l];
            (dec.isometry(l), ds, df)
        })
        .collect()
}

/// `I_S ⊗ |v>` as a `d_S d_F x d_S` matrix.
fn lift<T: Real>(ds: usize, v: &CVector<T>) -> CMatrix<T> {
    CMatrix::<T>::identity(ds, ds).kronecker(v)
}

/// `(μ_k, |t_k>)` with `τ = Σ μ_k |t_k><t_k|`.
fn spectrum<T: Real>(tau: &Operator<T>) -> Vec<(T, CVector<T>)> {
    let (vals, vecs) = hermitian_eigen(tau.matrix());
    vals.into_iter()
        .enumerate()
        .map(|(k, mu)| (mu.max(T::zero()), vecs.column(k).into_owned()))
        .collect()
}

fn basis_vector<T: Real>(d: usize, i: usize) -> CVector<T> {
    let mut e = CVector::zeros(d);
    e[i] = creal(T::one());
    e
}

/// Builds `E|_A` from a unital decomposed algebra and factor states.
pub fn conditional_expectation<T: Real>(
    alg: &MatrixAlgebra<T>,
    factor_states: Vec<Operator<T>>,
    tol: T,
) -> Result<ConditionalExpectation<T>> {
    let dec = alg
        .decomposition()
        .ok_or(QhmError::InvalidParameter("algebra has no block decomposition".into()))?;
    if dec.residual_dim > 0 {
        return Err(QhmError::NotUnital);
    }
    if factor_states.len() != dec.blocks.len() {
        return Err(QhmError::DimensionMismatch {
            expected: dec.blocks.len(),
            got: factor_states.len(),
        });
    }
    let mut kraus = Vec::new();
    for (l, ((v, ds, df), tau)) in isometries(dec).into_iter().zip(&factor_states).enumerate() {
        check_factor_state(tau, df, l, tol)?;
        // E_l(X) = V^† (tr_F[(I ⊗ τ) V X V^†] ⊗ I_F) V
        for (mu, t) in spectrum(tau) {
            let w = cplx(mu.sqrt(), T::zero());
            for f in 0..df {
                let a = v.adjoint() * lift(ds, &basis_vector(df, f)) * lift(ds, &t).adjoint() * &v;
                kraus.push(a * w);
            }
        }
    }
    let e = Superoperator::from_kraus(kraus)?;
    let j = e.adjoint();
    Ok(ConditionalExpectation {
        algebra: alg.clone(),
        factor_states,
        e,
        j,
    })
}

/// Factor states read off a state compatible with the algebra: the
/// normalized partial trace over the `S` factor of each block of `U^† σ U`.
pub fn factor_states_from<T: Real>(dec: &BlockDecomposition<T>, sigma: &Operator<T>) -> Result<Vec<Operator<T>>> {
    let mut out = Vec::with_capacity(dec.blocks.len());
    for (l, (v, ds, df)) in isometries(dec).into_iter().enumerate() {
        let blk = &v * sigma.matrix() * v.adjoint();
        let tf = partial_trace_first(&blk, ds, df);
        let tr = tf.trace().re;
        if tr <= T::zero() {
            return Err(QhmError::FactorState {
                block: l,
                reason: "zero weight".into(),
            });
        }
        out.push(Operator::from(tf.unscale(tr)).hermitian_part());
    }
    Ok(out)
}

/// Maximally mixed factor states, one per block.
pub fn maximally_mixed_factor_states<T: Real>(dec: &BlockDecomposition<T>) -> Vec<Operator<T>> {
    dec.blocks
        .iter()
        .map(|&(_, df)| Operator::identity(df).scale(T::one() / T::usize_lit(df)))
        .collect()
}

impl<T: Real> ConditionalExpectation<T> {
    pub fn algebra(&self) -> &MatrixAlgebra<T> {
        &self.algebra
    }

    pub fn decomposition(&self) -> &BlockDecomposition<T> {
        self.algebra.decomposition().expect("checked at construction")
    }

    pub fn factor_states(&self) -> &[Operator<T>] {
        &self.factor_states
    }

    /// `E|_A` (CP, unital, idempotent).
    pub fn expectation(&self) -> &Superoperator<T> {
        &self.e
    }

    /// The state extension `J|_A = E^†` (CPTP, idempotent).
    pub fn state_extension(&self) -> &Superoperator<T> {
        &self.j
    }

    /// `σ = U(⊕_l I_S/d_S ⊗ τ_l)U^† / L`, a state whose distortion of the
    /// algebra is the fixed-point set of `J`.
    pub fn reference_state(&self) -> Operator<T> {
        let dec = self.decomposition();
        let n = dec.dim();
        let nb = T::usize_lit(dec.blocks.len());
        let mut s = CMatrix::zeros(n, n);
        for (l, (v, ds, _)) in isometries(dec).into_iter().enumerate() {
            let id = CMatrix::<T>::identity(ds, ds).unscale(T::usize_lit(ds) * nb);
            s += v.adjoint() * id.kronecker(self.factor_states[l].matrix()) * v;
        }
        Operator::from(s)
    }

    /// Largest `‖E(A B) - A E(B)‖ / (‖A‖ ‖B‖)` over the algebra basis and the
    /// given test operators.
    pub fn module_residual(&self, tests: &[Operator<T>]) -> Result<T> {
        let mut worst = T::zero();
        for a in self.algebra.basis().basis() {
            for b in tests {
                let lhs = self.e.apply(&Operator::from(a.matrix() * b.matrix()))?;
                let rhs = a.matrix() * self.e.apply(b)?.matrix();
                let scale = (a.norm() * b.norm()).max(T::default_epsilon());
                worst = worst.max((lhs.matrix() - rhs).norm() / scale);
            }
        }
        Ok(worst)
    }

    /// Builds the factorization through the reduced block algebra.
    pub fn factorize(&self) -> Result<Factorization<T>> {
        let dec = self.decomposition();
        let mask: Vec<usize> = dec.blocks.iter().map(|b| b.0).collect();
        let ms: usize = mask.iter().sum();
        let offs = block_offsets(&mask);
        let mut rk = Vec::new();
        let mut jk = Vec::new();
        for (l, (v, ds, df)) in isometries(dec).into_iter().enumerate() {
            let mut inc = CMatrix::<T>::zeros(ms, ds);
            for s in 0..ds {
                inc[(offs[l] + s, s)] = creal(T::one());
            }
            // R(X) = ⊕_l tr_F(V_l X V_l^†)
            for f in 0..df {
                rk.push(&inc * lift(ds, &basis_vector(df, f)).adjoint() * &v);
            }
            // J(x) = ⊕_l V_l^† (x_l ⊗ τ_l) V_l
            for (mu, t) in spectrum(&self.factor_states[l]) {
                let w = cplx(mu.sqrt(), T::zero());
                jk.push(v.adjoint() * lift(ds, &t) * inc.adjoint() * w);
            }
        }
        let r = Superoperator::from_kraus(rk)?;
        let j = Superoperator::from_kraus(jk)?;
        Ok(Factorization {
            r0: j.adjoint(),
            j0: r.adjoint(),
            r,
            j,
            mask,
        })
    }
}

/// `Č_i = J^†(C_i)`, so that `tr(Č_i^† x) = tr(C_i^† J(x))`.
pub fn reduced_output_ops<T: Real>(f: &Factorization<T>, outs: &[Operator<T>]) -> Result<Vec<Operator<T>>> {
    outs.iter().map(|c| f.r0.apply(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::generated_algebra;
    use crate::config::Config;
    use crate::generators::{random_density, random_unitary};
    use crate::linalg::hs_inner;
    use crate::subspace::OperatorSubspace;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    fn decomposed(ops: &[Operator<f64>], n: usize) -> MatrixAlgebra<f64> {
        generated_algebra(&OperatorSubspace::span(n, ops, TOL).unwrap(), TOL)
            .unwrap()
            .decomposed(&Config::default())
            .unwrap()
    }

    /// Random unital algebra `W(B(C^2) ⊗ I_2 ⊕ B(C^1) ⊗ I_3 ⊕ B(C^2))W^†` on `C^9`.
    fn planted(seed: u64) -> MatrixAlgebra<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_unitary::<f64, _>(9, &mut rng);
        let mut ops = Vec::new();
        let mut off = 0;
        for (ds, df) in [(2usize, 2usize), (1, 3), (2, 1)] {
            for i in 0..ds {
                for k in 0..ds {
                    let mut e = CMatrix::<f64>::zeros(ds, ds);
                    e[(i, k)] = creal(1.0);
                    let mut full = CMatrix::zeros(9, 9);
                    full.view_mut((off, off), (ds * df, ds * df))
                        .copy_from(&e.kronecker(&CMatrix::identity(df, df)));
                    ops.push(Operator::from(&w * full * w.adjoint()));
                }
            }
            off += ds * df;
        }
        decomposed(&ops, 9)
    }

    fn random_taus(dec: &BlockDecomposition<f64>, rng: &mut ChaCha8Rng) -> Vec<Operator<f64>> {
        dec.blocks.iter().map(|&(_, df)| random_density(df, rng)).collect()
    }

    fn superop_dist(a: &Superoperator<f64>, b: &Superoperator<f64>) -> f64 {
        a.distance(b).unwrap()
    }

    #[test]
    fn full_algebra_gives_identity() {
        let alg = MatrixAlgebra::<f64>::full(3).decomposed(&Config::default()).unwrap();
        let ce = conditional_expectation(&alg, vec![Operator::identity(1)], TOL).unwrap();
        assert!(superop_dist(ce.expectation(), &Superoperator::identity(3)) < 1e-12);
        let f = ce.factorize().unwrap();
        assert_eq!(f.mask, vec![3]);
    }

    #[test]
    fn scalar_block_with_biased_factor_state() {
        let alg = decomposed(&[Operator::identity(2)], 2);
        let tau = Operator::from_real_diagonal(&[0.7, 0.3]);
        let ce = conditional_expectation(&alg, vec![tau.clone()], TOL).unwrap();
        let u = &alg.decomposition().unwrap().unitary;
        let tau_full = Operator::from(u * tau.matrix() * u.adjoint());
        let x = Operator::from_rows(2, &[(1.0, 0.0), (0.2, -0.4), (0.5, 0.1), (-2.0, 0.0)]);
        let ex = ce.expectation().apply(&x).unwrap();
        let expected = Operator::identity(2).matrix() * (tau_full.matrix() * x.matrix()).trace();
        assert!((ex.matrix() - expected).norm() < 1e-12);
        let f = ce.factorize().unwrap();
        let y = f.j.apply(&Operator::from(CMatrix::from_element(1, 1, creal(2.0)))).unwrap();
        assert!((y.matrix() - tau_full.matrix() * creal(2.0)).norm() < 1e-12);
    }

    #[test]
    fn maximally_mixed_gives_orthogonal_projection() {
        let alg = planted(1);
        let taus = maximally_mixed_factor_states(alg.decomposition().unwrap());
        let ce = conditional_expectation(&alg, taus, TOL).unwrap();
        assert!(superop_dist(ce.expectation(), ce.state_extension()) < 1e-10);
        let j = ce.state_extension();
        let ji = j.apply(&Operator::identity(9)).unwrap();
        assert!((ji.matrix() - CMatrix::identity(9, 9)).norm() < 1e-10);
    }

    #[test]
    fn rejects_bad_factor_states() {
        let alg = planted(2);
        let dec = alg.decomposition().unwrap();
        let mut taus = maximally_mixed_factor_states(dec);
        taus[0] = Operator::from_real_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            conditional_expectation(&alg, taus, TOL),
            Err(QhmError::FactorState { block: 0, .. })
        ));
        let mut taus = maximally_mixed_factor_states(dec);
        taus[1] = Operator::identity(2).scale(0.5);
        assert!(conditional_expectation(&alg, taus, TOL).is_err());
    }

    #[test]
    fn factor_states_roundtrip_through_reference_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let alg = planted(4);
        let dec = alg.decomposition().unwrap();
        let taus = random_taus(dec, &mut rng);
        let ce = conditional_expectation(&alg, taus.clone(), TOL).unwrap();
        let back = factor_states_from(dec, &ce.reference_state()).unwrap();
        for (a, b) in taus.iter().zip(&back) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-10);
        }
    }

    #[test]
    fn interface_like_extension_is_tensor_with_mixed_state() {
        // A = B(C^2) ⊗ I_3: J(x) = x ⊗ I/3
        let ops: Vec<Operator<f64>> = crate::generators::hermitian_basis::<f64>(2)
            .into_iter()
            .map(|h| Operator::from(h.kronecker(&CMatrix::identity(3, 3))))
            .collect();
        let alg = decomposed(&ops, 6);
        let dec = alg.decomposition().unwrap();
        assert_eq!(dec.blocks, vec![(2, 3)]);
        let ce = conditional_expectation(&alg, maximally_mixed_factor_states(dec), TOL).unwrap();
        let f = ce.factorize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Operator<f64> = random_density(2, &mut rng);
        let y = f.j.apply(&x).unwrap();
        // J(x) equals W (x ⊗ I/3) W^† with W the (unitary) change of basis
        // acting trivially on the algebra; compare the R-image instead
        let back = f.r.apply(&y).unwrap();
        assert!((back.matrix() - x.matrix()).norm() < 1e-10);
        let mixed = Operator::from(
            dec.unitary.adjoint() * y.matrix() * &dec.unitary
                - x.matrix().kronecker(&CMatrix::identity(3, 3)).unscale(3.0),
        );
        assert!(mixed.norm() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn expectation_and_factorization_invariants(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alg = planted(seed);
            let dec = alg.decomposition().unwrap();
            let taus = random_taus(dec, &mut rng);
            let ce = conditional_expectation(&alg, taus, TOL).unwrap();
            let e = ce.expectation();
            let j = ce.state_extension();
            let tests: Vec<Operator<f64>> = (0..20)
                .map(|_| Operator::from(crate::generators::gaussian_matrix::<f64, _>(9, 9, &mut rng)))
                .collect();

            prop_assert!(e.validate_cptp(TOL).is_cp);
            let ei = e.apply(&Operator::identity(9)).unwrap();
            prop_assert!((ei.matrix() - CMatrix::identity(9, 9)).norm() < 1e-9);
            prop_assert!(j.validate_cptp(TOL).is_cptp());
            let ee = Superoperator::compose(e, e).unwrap();
            prop_assert!(superop_dist(&ee, e) < 1e-9);
            let jj = Superoperator::compose(j, j).unwrap();
            prop_assert!(superop_dist(&jj, j) < 1e-9);
            prop_assert!(ce.module_residual(&tests).unwrap() < 1e-9);

            // fixed points of J are D_σ(A)
            let sigma = crate::linalg::DistortionMap::new(ce.reference_state(), TOL).unwrap();
            for a in alg.basis().basis() {
                let d = sigma.distort(&a);
                let jd = j.apply(&d).unwrap();
                prop_assert!((jd.matrix() - d.matrix()).norm() < 1e-9 * d.norm().max(1.0));
            }

            // E is self-adjoint for the σ-weighted inner product
            let q = sigma.as_superoperator();
            for pair in tests.chunks(2).take(5) {
                let lhs = crate::linalg::weighted_inner(&q, &e.apply(&pair[0]).unwrap(), &pair[1], TOL).unwrap();
                let rhs = crate::linalg::weighted_inner(&q, &pair[0], &e.apply(&pair[1]).unwrap(), TOL).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
            }

            let f = ce.factorize().unwrap();
            prop_assert_eq!(f.reduced_dim(), 4 + 1 + 4);
            prop_assert!(f.r.validate_cptp(TOL).is_cptp());
            prop_assert!(f.j.validate_cptp(TOL).is_cptp());
            let jr = Superoperator::compose(&f.j, &f.r).unwrap();
            prop_assert!(superop_dist(&jr, j) < 1e-9);
            let j0r0 = Superoperator::compose(&f.j0, &f.r0).unwrap();
            prop_assert!(superop_dist(&j0r0, e) < 1e-9);
            prop_assert!(f.left_inverse_residual().unwrap() < 1e-9);
            let r0i = f.r0.apply(&Operator::identity(9)).unwrap();
            prop_assert!((r0i.matrix() - CMatrix::identity(5, 5)).norm() < 1e-9);

            // duality tr(R0(X) R(ρ)) = tr(X J|_A(ρ))
            for x in tests.iter().take(5) {
                let rho: Operator<f64> = random_density(9, &mut rng);
                let lhs = hs_inner(&f.r0.apply(&x.dagger()).unwrap(), &f.r.apply(&rho).unwrap()).unwrap();
                let rhs = hs_inner(&x.dagger(), &j.apply(&rho).unwrap()).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-9);
            }

            // reduced outputs: tr(Č^† x) = tr(C^† J(x)) on the reduced basis
            let outs = &tests[..3];
            let red = reduced_output_ops(&f, outs).unwrap();
            for x in f.reduced_basis() {
                for (c, cr) in outs.iter().zip(&red) {
                    let lhs = hs_inner(cr, &x).unwrap();
                    let rhs = hs_inner(c, &f.j.apply(&x).unwrap()).unwrap();
                    prop_assert!((lhs - rhs).norm() < 1e-9);
                }
                prop_assert!(f.check_mask(&f.r.apply(&f.j.apply(&x).unwrap()).unwrap(), 1e-9).is_ok());
            }
        }
    }
}
