//! Built-in models and seeded random matrices.

use crate::channels::Superoperator;
use crate::error::{QhmError, Result};
use crate::linalg::{cplx, creal, hermitian_eigen, null_space, CMatrix, CVector, Operator};
use crate::model::QhmModel;
use crate::scalar::Real;
use nalgebra::ComplexField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Validation tolerance for generated models: `1e-9`, or a few hundred ulps
/// for low-precision scalars.
fn gen_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::default_epsilon() * T::lit(256.0))
}

/// Complex Ginibre matrix with `N(0, 1/2) + i N(0, 1/2)` entries.
pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix<T> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        cplx(T::lit(re * h), T::lit(im * h))
    })
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn random_unitary<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix<T> {
    let qr = gaussian_matrix::<T, R>(n, n, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let m = d.modulus();
        if m > T::zero() {
            let phase = d.unscale(m);
            for x in q.column_mut(j).iter_mut() {
                *x *= phase;
            }
        }
    }
    q
}

pub fn random_hermitian<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Operator<T> {
    let g = gaussian_matrix::<T, R>(n, n, rng);
    Operator::from((&g + g.adjoint()).scale(T::lit(0.5)))
}

/// Random PSD operator of the given rank.
pub fn random_psd<T: Real, R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Operator<T> {
    let g = gaussian_matrix::<T, R>(n, rank, rng);
    Operator::from(&g * g.adjoint())
}

/// Random full-rank density operator.
pub fn random_density<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Operator<T> {
    let p = random_psd::<T, R>(n, n, rng);
    let tr = p.trace().re;
    p.scale(T::one() / tr)
}

/// Random Kraus set `{K_1..K_k}` on `C^n` with `Σ K^† K = I` (blocks of a
/// random isometry).
pub fn random_kraus<T: Real, R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<CMatrix<T>> {
    let g = gaussian_matrix::<T, R>(n * k, n, rng);
    let q = g.qr().q();
    (0..k).map(|i| q.rows(i * n, n).into_owned()).collect()
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn unitary_from_hamiltonian<T: Real>(h: &CMatrix<T>, t: T) -> CMatrix<T> {
    let (ev, vecs) = hermitian_eigen(h);
    let mut scaled = vecs.clone();
    for (j, &e) in ev.iter().enumerate() {
        let phase = cplx((e * t).cos(), -(e * t).sin());
        for x in scaled.column_mut(j).iter_mut() {
            *x *= phase;
        }
    }
    scaled * vecs.adjoint()
}

/// Hermitian, Hilbert–Schmidt orthonormal basis of `B(C^d)`: diagonal units,
/// then symmetric and antisymmetric off-diagonal pairs.
pub fn hermitian_basis<T: Real>(d: usize) -> Vec<CMatrix<T>> {
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut e = CMatrix::zeros(d, d);
        e[(i, i)] = creal(T::one());
        out.push(e);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut sym = CMatrix::zeros(d, d);
            sym[(i, j)] = creal(s);
            sym[(j, i)] = creal(s);
            out.push(sym);
            let mut asym = CMatrix::zeros(d, d);
            asym[(i, j)] = cplx(T::zero(), -s);
            asym[(j, i)] = cplx(T::zero(), s);
            out.push(asym);
        }
    }
    out
}

fn basis_vector<T: Real>(n: usize, i: usize) -> CVector<T> {
    let mut v = CVector::zeros(n);
    v[i] = creal(T::one());
    v
}

/// Grover search on `n` items with marked set `{0, .., m-1}`: the dynamics
/// is the unitary channel of `R O` (oracle then reflection about the uniform
/// state), outputs are the populations `|i><i|`, and `rho_0 = |psi><psi|`.
pub fn grover<T: Real>(n: usize, m: usize) -> Result<QhmModel<T>> {
    if n < 2 || m == 0 || m >= n || 2 * m == n {
        return Err(QhmError::InvalidParameter(format!(
            "grover needs N >= 2 and 0 < M < N with M != N/2 (got N={n}, M={m})"
        )));
    }
    let amp = T::one() / T::usize_lit(n).sqrt();
    let psi = CVector::from_element(n, creal(amp));
    let reflect = (&psi * psi.adjoint()).scale(T::lit(2.0)) - CMatrix::identity(n, n);
    let oracle = CMatrix::from_fn(n, n, |i, j| {
        if i != j {
            creal(T::zero())
        } else if i < m {
            creal(-T::one())
        } else {
            creal(T::one())
        }
    });
    let map = Superoperator::from_kraus(vec![reflect * oracle])?;
    let outputs = (0..n)
        .map(|i| Operator::ket_bra(&basis_vector::<T>(n, i)))
        .collect();
    let rho0 = Operator::ket_bra(&psi);
    Ok(QhmModel::new(map, outputs, vec![rho0], format!("grover-N{n}-M{m}"), gen_tol())?
        .with_metadata(format!("marked items 0..{m}")))
}

/// The four-dimensional abelian example: trivial dynamics, two outputs
/// `|j><j| + |j+2><j+2|` (the action of `<phi_j| . |phi_j>` with
/// `phi_j = |j> + |j+2>` on diagonal states) and three diagonal initial states.
pub fn appendix<T: Real>() -> QhmModel<T> {
    let outputs = vec![
        Operator::from_real_diagonal(&[1.0, 0.0, 1.0, 0.0]),
        Operator::from_real_diagonal(&[0.0, 1.0, 0.0, 1.0]),
    ];
    let states = vec![
        Operator::from_real_diagonal(&[0.25, 0.25, 0.25, 0.25]),
        Operator::from_real_diagonal(&[3.0 / 7.0, 0.0, 2.0 / 7.0, 2.0 / 7.0]),
        Operator::from_real_diagonal(&[7.0 / 20.0, 6.0 / 20.0, 3.0 / 20.0, 4.0 / 20.0]),
    ];
    QhmModel::new(Superoperator::identity(4), outputs, states, "appendix", gen_tol())
        .expect("static model is valid")
}

/// Pauli matrix `sigma_k` (`k = 0` is the identity).
pub fn pauli<T: Real>(k: usize) -> CMatrix<T> {
    let (o, z) = (T::one(), T::zero());
    let e = |a: (T, T), b: (T, T), c: (T, T), d: (T, T)| {
        CMatrix::from_row_slice(2, 2, &[cplx(a.0, a.1), cplx(b.0, b.1), cplx(c.0, c.1), cplx(d.0, d.1)])
    };
    match k {
        0 => e((o, z), (z, z), (z, z), (o, z)),
        1 => e((z, z), (o, z), (o, z), (z, z)),
        2 => e((z, z), (z, -o), (z, o), (z, z)),
        3 => e((o, z), (z, z), (z, z), (-o, z)),
        _ => panic!("Pauli index must be 0..=3"),
    }
}

/// Two qubits with identity dynamics, initial states
/// `(I/2 + sigma_x/4) ⊗ tau` and `(I/2 + sigma_y/4) ⊗ tau`, and the single
/// output `sigma_z ⊗ sigma_z`.
pub fn example3<T: Real>(tau: &Operator<T>) -> Result<QhmModel<T>> {
    if tau.dim() != 2 {
        return Err(QhmError::DimensionMismatch {
            expected: 2,
            got: tau.dim(),
        });
    }
    tau.check_density(gen_tol())?;
    if !tau.is_positive_definite(gen_tol()) {
        return Err(QhmError::InvalidParameter("tau must be full rank".into()));
    }
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let a = pauli::<T>(0).scale(half) + pauli::<T>(1).scale(quarter);
    let b = pauli::<T>(0).scale(half) + pauli::<T>(2).scale(quarter);
    let states = vec![
        Operator::from(a.kronecker(tau.matrix())),
        Operator::from(b.kronecker(tau.matrix())),
    ];
    let c = Operator::from(pauli::<T>(3).kronecker(&pauli::<T>(3)));
    QhmModel::new(Superoperator::identity(4), vec![c], states, "example3", gen_tol())
}

/// Generators `{xi ⊗ sigma_x, xi ⊗ sigma_y, xi ⊗ sigma_z}` with
/// `xi = 2 I + sigma_z`, together with the state `rho = xi ⊗ I` (unnormalized).
pub fn distorted_algebra_example<T: Real>() -> (Vec<Operator<T>>, Operator<T>) {
    let xi = pauli::<T>(0).scale(T::lit(2.0)) + pauli::<T>(3);
    let gens = (1..=3)
        .map(|k| Operator::from(xi.kronecker(&pauli::<T>(k))))
        .collect();
    let rho = Operator::from(xi.kronecker(&pauli::<T>(0)));
    (gens, rho)
}

/// Parameters of the system–interface–environment model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceParams {
    pub d_s: usize,
    pub d_e: usize,
    pub p_i: f64,
    pub p_s: f64,
    pub p_e: f64,
    pub dt: f64,
    pub seed: u64,
    /// Number of random initial densities.
    pub states: usize,
}

impl Default for InterfaceParams {
    fn default() -> Self {
        Self {
            d_s: 2,
            d_e: 3,
            p_i: 0.1,
            p_s: 0.05,
            p_e: 0.05,
            dt: 0.5,
            seed: 0,
            states: 1,
        }
    }
}

/// `H = C^{d_s} ⊗ C^2 ⊗ C^{d_e}` with dynamics `E(U . U^†)`, where
/// `U = exp(-i (H_S ⊗ Z ⊗ I + I ⊗ Z ⊗ H_E) dt)` and `E` mixes an interface
/// bit flip, a system unitary and an environment unitary. Outputs are
/// `S_i ⊗ I ⊗ I` over a Hermitian orthonormal basis `{S_i}` of `B(C^{d_s})`.
pub fn interface<T: Real>(p: &InterfaceParams) -> Result<QhmModel<T>> {
    let probs = [p.p_i, p.p_s, p.p_e];
    if p.d_s == 0 || p.d_e == 0 || probs.iter().any(|&x| !(0.0..=1.0).contains(&x)) || probs.iter().sum::<f64>() > 1.0 {
        return Err(QhmError::InvalidParameter(format!(
            "interface parameters out of range: {p:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (ds, de) = (p.d_s, p.d_e);
    let n = ds * 2 * de;
    let hs = random_hermitian::<T, _>(ds, &mut rng).into_matrix();
    let he = random_hermitian::<T, _>(de, &mut rng).into_matrix();
    let us = random_unitary::<T, _>(ds, &mut rng);
    let ue = random_unitary::<T, _>(de, &mut rng);
    let (is, ie, z, x) = (
        CMatrix::<T>::identity(ds, ds),
        CMatrix::<T>::identity(de, de),
        pauli::<T>(3),
        pauli::<T>(1),
    );
    let i2 = pauli::<T>(0);
    let h = hs.kronecker(&z).kronecker(&ie) + is.kronecker(&z).kronecker(&he);
    let u = unitary_from_hamiltonian(&h, T::lit(p.dt));
    let flip = is.kronecker(&x).kronecker(&ie);
    let sys = us.kronecker(&i2).kronecker(&ie);
    let env = is.kronecker(&i2).kronecker(&ue);
    let rest = 1.0 - p.p_i - p.p_s - p.p_e;
    let mut kraus = Vec::new();
    for (w, op) in [(p.p_i, flip), (p.p_s, sys), (p.p_e, env), (rest, CMatrix::identity(n, n))] {
        if w > 0.0 {
            kraus.push((op * &u).scale(T::lit(w.sqrt())));
        }
    }
    let map = Superoperator::from_kraus(kraus)?;
    let ie_full = CMatrix::<T>::identity(2 * de, 2 * de);
    let outputs = hermitian_basis::<T>(ds)
        .into_iter()
        .map(|s| Operator::from(s.kronecker(&ie_full)))
        .collect();
    let states = (0..p.states.max(1))
        .map(|_| random_density::<T, _>(n, &mut rng))
        .collect();
    Ok(QhmModel::new(map, outputs, states, format!("interface-S{ds}-E{de}"), gen_tol())?
        .with_metadata(format!("p_I={} p_S={} p_E={} dt={} seed={}", p.p_i, p.p_s, p.p_e, p.dt, p.seed)))
}

/// Extra structure planted in a random model so that reductions are
/// non-trivial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Generic Kraus operators, outputs and states.
    #[default]
    None,
    /// A classical Markov chain in a random basis; states and outputs are
    /// diagonal in that basis.
    Classical,
    /// Two invariant blocks in a random basis with block-diagonal states.
    Block,
    /// A single initial state equal to the fixed point of the dynamics.
    FixedPoint,
    /// `A_1 ⊗ A_2` where `A_2` fixes a full-rank `tau`; states are `rho ⊗ tau`.
    Product,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n: usize,
    pub kraus: usize,
    pub outputs: usize,
    pub states: usize,
    pub seed: u64,
    pub structure: Structure,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            n: 3,
            kraus: 2,
            outputs: 1,
            states: 1,
            seed: 0,
            structure: Structure::None,
        }
    }
}

fn conjugate_all<T: Real>(w: &CMatrix<T>, ops: Vec<CMatrix<T>>) -> Vec<CMatrix<T>> {
    ops.into_iter().map(|k| w * k * w.adjoint()).collect()
}

fn block_diag<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(n1 + n2, n1 + n2);
    out.view_mut((0, 0), (n1, n1)).copy_from(a);
    out.view_mut((n1, n1), (n2, n2)).copy_from(b);
    out
}

/// Seeded random model with optional planted structure.
pub fn random_model<T: Real>(spec: &RandomSpec) -> Result<QhmModel<T>> {
    let RandomSpec { n, kraus, outputs, states, seed, structure } = *spec;
    if n == 0 || kraus == 0 || states == 0 {
        return Err(QhmError::InvalidParameter(
            "random model needs n, #kraus and #states >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let herm_outputs = |rng: &mut ChaCha8Rng| -> Vec<Operator<T>> {
        (0..outputs).map(|_| random_hermitian::<T, _>(n, rng)).collect()
    };
    let (kraus_ops, out_ops, init) = match structure {
        Structure::None => {
            let k = random_kraus::<T, _>(n, kraus, &mut rng);
            let o = herm_outputs(&mut rng);
            let s = (0..states).map(|_| random_density::<T, _>(n, &mut rng)).collect();
            (k, o, s)
        }
        Structure::Classical => {
            let w = random_unitary::<T, _>(n, &mut rng);
            let mut p = CMatrix::<T>::zeros(n, n);
            for j in 0..n {
                let col: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
                let s: f64 = col.iter().sum();
                for i in 0..n {
                    p[(i, j)] = creal(T::lit(col[i] / s));
                }
            }
            let mut k = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let mut e = CMatrix::zeros(n, n);
                    e[(i, j)] = creal(p[(i, j)].re.sqrt());
                    k.push(e);
                }
            }
            let diag = |rng: &mut ChaCha8Rng, positive: bool| {
                let v: Vec<f64> = (0..n)
                    .map(|_| if positive { rng.random::<f64>() + 0.1 } else { rng.sample(StandardNormal) })
                    .collect();
                let s: f64 = if positive { v.iter().sum() } else { 1.0 };
                Operator::<T>::from_real_diagonal(&v.iter().map(|x| x / s).collect::<Vec<_>>()).into_matrix()
            };
            let o = (0..outputs).map(|_| diag(&mut rng, false)).collect::<Vec<_>>();
            let s = (0..states).map(|_| diag(&mut rng, true)).collect::<Vec<_>>();
            (
                conjugate_all(&w, k),
                conjugate_all(&w, o).into_iter().map(Operator::from).collect(),
                conjugate_all(&w, s).into_iter().map(Operator::from).collect(),
            )
        }
        Structure::Block => {
            if n < 2 {
                return Err(QhmError::InvalidParameter("block structure needs n >= 2".into()));
            }
            let n1 = n.div_ceil(2);
            let n2 = n - n1;
            let w = random_unitary::<T, _>(n, &mut rng);
            let k1 = random_kraus::<T, _>(n1, kraus, &mut rng);
            let k2 = random_kraus::<T, _>(n2, kraus, &mut rng);
            let k = k1.iter().zip(&k2).map(|(a, b)| block_diag(a, b)).collect();
            let o = herm_outputs(&mut rng).into_iter().map(Operator::into_matrix).collect();
            let s = (0..states)
                .map(|_| {
                    let q = T::lit(0.2 + 0.6 * rng.random::<f64>());
                    let a = random_density::<T, _>(n1, &mut rng).into_matrix().scale(q);
                    let b = random_density::<T, _>(n2, &mut rng)
                        .into_matrix()
                        .scale(T::one() - q);
                    block_diag(&a, &b)
                })
                .collect();
            (
                conjugate_all(&w, k),
                conjugate_all(&w, o).into_iter().map(Operator::from).collect(),
                conjugate_all(&w, s).into_iter().map(Operator::from).collect(),
            )
        }
        Structure::FixedPoint => {
            let k = random_kraus::<T, _>(n, kraus, &mut rng);
            let map = Superoperator::from_kraus(k.clone())?;
            let fixed = fixed_point(&map)?;
            let o = herm_outputs(&mut rng);
            (k, o, vec![fixed])
        }
        Structure::Product => {
            let n1 = (2..n).find(|d| n % d == 0).ok_or_else(|| {
                QhmError::InvalidParameter(format!("product structure needs composite n (got {n})"))
            })?;
            let n2 = n / n1;
            let k1 = random_kraus::<T, _>(n1, kraus, &mut rng);
            // A_2(X) = (1 - p) V X V^† + p tr(X) tau with [V, tau] = 0.
            let w = random_unitary::<T, _>(n2, &mut rng);
            let mu: Vec<f64> = {
                let v: Vec<f64> = (0..n2).map(|i| 1.0 + i as f64 + rng.random::<f64>()).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect()
            };
            let phases = CMatrix::<T>::from_fn(n2, n2, |i, j| {
                if i == j {
                    let a: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                    cplx(T::lit(a.cos()), T::lit(a.sin()))
                } else {
                    creal(T::zero())
                }
            });
            let v = &w * phases * w.adjoint();
            let pr = 0.3;
            let mut k2 = vec![v.scale(T::lit((1.0 - pr).sqrt()))];
            for (k, &m) in mu.iter().enumerate() {
                let tk = w.column(k).into_owned();
                for j in 0..n2 {
                    let e = basis_vector::<T>(n2, j);
                    k2.push((&tk * e.adjoint()).scale(T::lit((pr * m).sqrt())));
                }
            }
            let tau = Operator::<T>::from_real_diagonal(&mu);
            let tau = &w * tau.matrix() * w.adjoint();
            let k = k1
                .iter()
                .flat_map(|a| k2.iter().map(move |b| a.kronecker(b)))
                .collect();
            let o = herm_outputs(&mut rng);
            let s = (0..states)
                .map(|_| Operator::from(random_density::<T, _>(n1, &mut rng).matrix().kronecker(&tau)))
                .collect();
            (k, o, s)
        }
    };
    let map = Superoperator::from_kraus(kraus_ops)?;
    let label = format!("random-n{n}-seed{seed}-{structure:?}").to_lowercase();
    QhmModel::new(map, out_ops, init, label, gen_tol())
}

/// A fixed density of a CPTP map (kernel of `T - I`).
pub fn fixed_point<T: Real>(map: &Superoperator<T>) -> Result<Operator<T>> {
    let n = map.in_dim();
    let shifted = map.transfer() - CMatrix::identity(n * n, n * n);
    let ker = null_space(&shifted, T::lit(1e-10).max(T::default_epsilon() * T::lit(64.0)));
    for k in 0..ker.ncols() {
        let x = Operator::from_vec(ker.column(k).as_slice(), n);
        let tr = x.trace();
        if tr.modulus() > T::lit(1e-6) {
            let rho = Operator::from(x.matrix() / tr).hermitian_part();
            if rho.check_density(T::lit(1e-7)).is_ok() {
                return Ok(rho);
            }
        }
    }
    Err(QhmError::InvalidParameter("no fixed density found".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_matrices_have_their_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = random_unitary::<f64, _>(4, &mut rng);
        assert!((u.adjoint() * &u - CMatrix::identity(4, 4)).norm() < 1e-12);
        let rho = random_density::<f64, _>(4, &mut rng);
        rho.check_density(1e-12).unwrap();
        let ks = random_kraus::<f64, _>(3, 4, &mut rng);
        let s = ks.iter().fold(CMatrix::<f64>::zeros(3, 3), |a, k| a + k.adjoint() * k);
        assert!((s - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let b = hermitian_basis::<f64>(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            assert!((x - x.adjoint()).norm() < 1e-15);
            for (j, y) in b.iter().enumerate() {
                let g = x.dotc(y);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g.re - e).abs() < 1e-14 && g.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn grover_parameter_checks() {
        assert!(grover::<f64>(8, 4).is_err());
        assert!(grover::<f64>(8, 0).is_err());
        assert!(grover::<f64>(1, 0).is_err());
        let g = grover::<f64>(8, 1).unwrap();
        assert_eq!(g.dim(), 8);
        assert_eq!(g.output_ops().len(), 8);
        assert_eq!(g.map().kraus().unwrap().len(), 1);
    }

    #[test]
    fn every_structure_yields_a_valid_model() {
        for structure in [
            Structure::None,
            Structure::Classical,
            Structure::Block,
            Structure::FixedPoint,
            Structure::Product,
        ] {
            let m = random_model::<f64>(&RandomSpec {
                n: 4,
                kraus: 2,
                outputs: 2,
                states: 2,
                seed: 7,
                structure,
            })
            .unwrap();
            assert_eq!(m.dim(), 4);
        }
        assert!(random_model::<f64>(&RandomSpec { n: 3, structure: Structure::Product, ..Default::default() }).is_err());
    }

    #[test]
    fn fixed_point_is_fixed() {
        let m = random_model::<f64>(&RandomSpec { n: 3, structure: Structure::FixedPoint, ..Default::default() }).unwrap();
        let rho = &m.initial_states()[0];
        let next = m.map().apply(rho).unwrap();
        assert!((next.matrix() - rho.matrix()).norm() < 1e-10);
    }

    #[test]
    fn interface_and_examples_validate() {
        let m = interface::<f64>(&InterfaceParams::default()).unwrap();
        assert_eq!(m.dim(), 12);
        assert_eq!(m.output_ops().len(), 4);
        assert!(interface::<f64>(&InterfaceParams { p_i: 0.8, p_s: 0.3, ..Default::default() }).is_err());
        let tau = Operator::from_real_diagonal(&[0.7, 0.3]);
        let e3 = example3::<f64>(&tau).unwrap();
        assert_eq!(e3.initial_states().len(), 2);
        assert!(example3::<f64>(&Operator::from_real_diagonal(&[1.0, 0.0])).is_err());
        let a = appendix::<f64>();
        assert_eq!(a.initial_states().len(), 3);
    }

    #[test]
    fn f32_generators_work() {
        let g = grover::<f32>(8, 1).unwrap();
        assert_eq!(g.dim(), 8);
        let r = random_model::<f32>(&RandomSpec::default()).unwrap();
        assert_eq!(r.dim(), 3);
    }
}
