//! Dense complex-matrix kernel: Hilbert–Schmidt geometry, Hermitian matrix
//! functions, distortion maps and support projectors.

use crate::channels::Superoperator;
use crate::error::{QhmError, Result};
use crate::scalar::Real;
use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use std::ops::Deref;

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn creal<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

/// Column-stacking vectorization.
pub fn vectorize<T: Real>(m: &CMatrix<T>) -> CVector<T> {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvectorize<T: Real>(v: &[Complex<T>], rows: usize, cols: usize) -> CMatrix<T> {
    CMatrix::from_column_slice(rows, cols, v)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()).scale(T::lit(0.5));
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Singular values sorted descending together with the matching left and
/// right singular vectors (`m = u diag(s) v^†`).
pub fn svd_sorted<T: Real>(m: &CMatrix<T>) -> (CMatrix<T>, Vec<T>, CMatrix<T>) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (CMatrix::zeros(r, 0), Vec::new(), CMatrix::zeros(c, 0));
    }
    // nalgebra's complex SVD can return factors that do not reconstruct the
    // input, so the decomposition runs through faer in double precision.
    let fm = faer::Mat::<faer::c64>::from_fn(r, c, |i, j| {
        faer::c64::new(m[(i, j)].re.as_f64(), m[(i, j)].im.as_f64())
    });
    let svd = fm.thin_svd().expect("SVD did not converge");
    let back = |x: &faer::c64| cplx(T::lit(x.re), T::lit(x.im));
    let u = CMatrix::from_fn(r, r.min(c), |i, j| back(&svd.U()[(i, j)]));
    let v = CMatrix::from_fn(c, r.min(c), |i, j| back(&svd.V()[(i, j)]));
    let sv: Vec<T> = (0..r.min(c)).map(|i| T::lit(svd.S()[i].re)).collect();
    let k = sv.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        sv[b]
            .partial_cmp(&sv[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut us = CMatrix::zeros(r, k);
    let mut vs = CMatrix::zeros(c, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
        s.push(sv[src]);
    }
    (us, s, vs)
}

/// Orthonormal basis (as columns) of the column space of `m`, keeping singular
/// values above `tol * sigma_max`.
pub fn orthonormal_range<T: Real>(m: &CMatrix<T>, tol: T) -> CMatrix<T> {
    let (u, s, _) = svd_sorted(m);
    let smax = s.first().copied().unwrap_or_else(T::zero);
    if smax <= T::zero() {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let rank = s.iter().take_while(|&&x| x > tol * smax).count();
    u.columns(0, rank).into_owned()
}

/// Orthonormal basis (as columns) of the null space of `m`, with the same
/// relative rank rule as [`orthonormal_range`].
pub fn null_space<T: Real>(m: &CMatrix<T>, tol: T) -> CMatrix<T> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return CMatrix::identity(cols, cols);
    }
    // Pad to at least square so the SVD exposes a full right basis.
    let padded = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (_, s, v) = svd_sorted(&padded);
    let smax = s.first().copied().unwrap_or_else(T::zero);
    let rank = if smax <= T::zero() {
        0
    } else {
        s.iter().take_while(|&&x| x > tol * smax).count()
    };
    v.columns(rank, cols - rank).into_owned()
}

/// Right null vectors of `m` with singular value at most `thresh` (absolute).
pub fn null_space_below<T: Real>(m: &CMatrix<T>, thresh: T) -> CMatrix<T> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return CMatrix::identity(cols, cols);
    }
    let padded = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (_, s, v) = svd_sorted(&padded);
    let rank = s.iter().take_while(|&&x| x > thresh).count();
    v.columns(rank, cols - rank).into_owned()
}

/// Orthonormal basis of the range of an orthogonal projector, built by
/// Gram–Schmidt on its columns in index order, so that coordinate projectors
/// yield standard basis vectors.
pub fn projector_basis<T: Real>(p: &CMatrix<T>, rank: usize) -> CMatrix<T> {
    let n = p.nrows();
    let mut out: Vec<CVector<T>> = Vec::with_capacity(rank);
    let accept = |out: &Vec<CVector<T>>, j: usize| -> (CVector<T>, T) {
        let mut r: CVector<T> = p.column(j).into_owned();
        for _ in 0..2 {
            for q in out {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        let nr = r.norm();
        (r, nr)
    };
    let mut used = vec![false; n];
    for j in 0..n {
        if out.len() == rank {
            break;
        }
        let (r, nr) = accept(&out, j);
        if nr > T::lit(0.1) {
            out.push(r.unscale(nr));
            used[j] = true;
        }
    }
    // Pivoted fallback for projectors whose columns are all small.
    while out.len() < rank {
        let best = (0..n)
            .filter(|&j| !used[j])
            .map(|j| (j, accept(&out, j)))
            .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(std::cmp::Ordering::Equal));
        match best {
            Some((j, (r, nr))) if nr > T::zero() => {
                used[j] = true;
                out.push(r.unscale(nr));
            }
            _ => break,
        }
    }
    let mut m = CMatrix::zeros(n, out.len());
    for (k, c) in out.iter().enumerate() {
        m.set_column(k, c);
    }
    m
}

pub fn max_singular_value<T: Real>(m: &CMatrix<T>) -> T {
    svd_sorted(m).1.first().copied().unwrap_or_else(T::zero)
}

/// Unitary factor `W Z^†` of the polar decomposition of a square matrix.
pub fn polar_unitary<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let (u, _, v) = svd_sorted(m);
    u * v.adjoint()
}

/// Trace over the second factor of `C^{d1} ⊗ C^{d2}`.
pub fn partial_trace_second<T: Real>(m: &CMatrix<T>, d1: usize, d2: usize) -> CMatrix<T> {
    let mut out = CMatrix::zeros(d1, d1);
    for i in 0..d1 {
        for j in 0..d1 {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..d2 {
                acc += m[(i * d2 + k, j * d2 + k)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Trace over the first factor of `C^{d1} ⊗ C^{d2}`.
pub fn partial_trace_first<T: Real>(m: &CMatrix<T>, d1: usize, d2: usize) -> CMatrix<T> {
    let mut out = CMatrix::zeros(d2, d2);
    for a in 0..d2 {
        for b in 0..d2 {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..d1 {
                acc += m[(k * d2 + a, k * d2 + b)];
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// A square complex matrix used as an element of `B(C^n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T: Real>(CMatrix<T>);

impl<T: Real> Deref for Operator<T> {
    type Target = CMatrix<T>;
    fn deref(&self) -> &CMatrix<T> {
        &self.0
    }
}

impl<T: Real> From<CMatrix<T>> for Operator<T> {
    /// Panics on non-square input; use [`Operator::new`] for fallible construction.
    fn from(m: CMatrix<T>) -> Self {
        assert!(m.is_square(), "operator must be square");
        Self(m)
    }
}

impl<T: Real> Operator<T> {
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(QhmError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                creal(T::lit(diag[i]))
            } else {
                creal(T::zero())
            }
        }))
    }

    /// Row-major construction from `(re, im)` pairs.
    pub fn from_rows(n: usize, entries: &[(f64, f64)]) -> Self {
        assert_eq!(entries.len(), n * n);
        Self(CMatrix::from_fn(n, n, |i, j| {
            let (re, im) = entries[i * n + j];
            cplx(T::lit(re), T::lit(im))
        }))
    }

    /// Projector `|v><v|` onto a (not necessarily normalized) vector.
    pub fn ket_bra(v: &CVector<T>) -> Self {
        Self(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.0
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex<T> {
        self.0.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.0.norm()
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.scale(s))
    }

    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).scale(T::lit(0.5)))
    }

    pub fn anti_hermitian_part(&self) -> Self {
        // (X - X^†) / 2i
        let d = &self.0 - self.0.adjoint();
        Self(d * cplx(T::zero(), T::lit(-0.5)))
    }

    /// `‖X − X^†‖_F / ‖X‖_F` (zero for the zero operator).
    pub fn hermitian_residual(&self) -> T {
        let n = self.norm();
        if n <= T::zero() {
            return T::zero();
        }
        (&self.0 - self.0.adjoint()).norm() / n
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermitian_residual() <= tol
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigen(&self.0).0
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or_else(T::zero)
    }

    pub fn is_positive_definite(&self, tol: T) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        let ev = self.eigenvalues();
        let scale = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        scale > T::zero() && ev[0] > tol * scale
    }

    /// Checks the density-operator invariants: Hermitian, PSD and unit trace,
    /// all relative to `tol`.
    pub fn check_density(&self, tol: T) -> Result<()> {
        let herm = self.hermitian_residual();
        if herm > tol {
            return Err(QhmError::NotDensity(format!(
                "Hermitian residual {:.3e}",
                herm.as_f64()
            )));
        }
        let ev = self.eigenvalues();
        let scale = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs())).max(T::one());
        if let Some(&min) = ev.first() {
            if min < -tol * scale {
                return Err(QhmError::NotDensity(format!(
                    "min eigenvalue {:.3e}",
                    min.as_f64()
                )));
            }
        }
        let tr = self.trace();
        if (tr - creal(T::one())).modulus() > tol * scale {
            return Err(QhmError::NotDensity(format!(
                "trace {:.12}",
                tr.re.as_f64()
            )));
        }
        Ok(())
    }

    pub fn vec(&self) -> CVector<T> {
        vectorize(&self.0)
    }

    pub fn from_vec(v: &[Complex<T>], n: usize) -> Self {
        Self(unvectorize(v, n, n))
    }
}

fn check_dims<T: Real>(x: &Operator<T>, y: &Operator<T>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(QhmError::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(())
}

/// Hilbert–Schmidt inner product `tr(X^† Y)`.
pub fn hs_inner<T: Real>(x: &Operator<T>, y: &Operator<T>) -> Result<Complex<T>> {
    check_dims(x, y)?;
    Ok(x.matrix().dotc(y.matrix()))
}

/// Inner product `<X, Q(Y)>_HS` induced by a self-adjoint positive-definite
/// superoperator `Q`.
pub fn weighted_inner<T: Real>(
    q: &Superoperator<T>,
    x: &Operator<T>,
    y: &Operator<T>,
    tol: T,
) -> Result<Complex<T>> {
    check_dims(x, y)?;
    if q.in_dim() != x.dim() || q.out_dim() != x.dim() {
        return Err(QhmError::DimensionMismatch {
            expected: x.dim(),
            got: q.in_dim(),
        });
    }
    let t = q.transfer();
    let scale = t.norm().max(T::default_epsilon());
    let herm = (t - t.adjoint()).norm() / scale;
    if herm > tol {
        return Err(QhmError::NotPositiveSuperoperator(format!(
            "not self-adjoint (residual {:.3e})",
            herm.as_f64()
        )));
    }
    let (ev, _) = hermitian_eigen(t);
    let emax = ev.last().copied().unwrap_or_else(T::zero);
    if ev.first().map_or(true, |&e| e <= tol * emax) {
        return Err(QhmError::NotPositiveSuperoperator(format!(
            "min eigenvalue {:.3e}",
            ev.first().copied().unwrap_or_else(T::zero).as_f64()
        )));
    }
    hs_inner(x, &q.apply(y)?)
}

/// Positive semidefinite square root of a Hermitian PSD operator.
///
/// Eigenvalues in `[-tol * scale, 0]` are clipped to zero; anything more
/// negative is an error.
pub fn hermitian_sqrt<T: Real>(p: &Operator<T>, tol: T) -> Result<Operator<T>> {
    let herm = p.hermitian_residual();
    if herm > tol {
        return Err(QhmError::NotHermitian(herm.as_f64()));
    }
    let (ev, vecs) = hermitian_eigen(p.matrix());
    let scale = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    if let Some(&min) = ev.first() {
        if min < -tol * scale {
            return Err(QhmError::NotPositive(min.as_f64()));
        }
    }
    // Eigenvalues at round-off level are treated as zero so that the root
    // keeps the support of `p`.
    let roots: Vec<T> = ev
        .iter()
        .map(|&e| if e > tol * scale { e.sqrt() } else { T::zero() })
        .collect();
    Ok(Operator(spectral_function(&vecs, &roots)))
}

/// `V diag(f) V^†`.
pub(crate) fn spectral_function<T: Real>(vecs: &CMatrix<T>, values: &[T]) -> CMatrix<T> {
    let mut scaled = vecs.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * vecs.adjoint()
}

/// The distortion `D_sigma(X) = sigma^{1/2} X sigma^{1/2}` together with its
/// inverse on the support of `sigma`.
#[derive(Clone, Debug)]
pub struct DistortionMap<T: Real> {
    sigma: Operator<T>,
    sqrt_sigma: Operator<T>,
    inv_sqrt_sigma: Operator<T>,
    support: Operator<T>,
    tol: T,
}

impl<T: Real> DistortionMap<T> {
    pub fn new(sigma: Operator<T>, tol: T) -> Result<Self> {
        let herm = sigma.hermitian_residual();
        if herm > tol {
            return Err(QhmError::NotHermitian(herm.as_f64()));
        }
        let (ev, vecs) = hermitian_eigen(sigma.matrix());
        let scale = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        if scale <= T::zero() {
            return Err(QhmError::NotPositive(0.0));
        }
        if ev[0] < -tol * scale {
            return Err(QhmError::NotPositive(ev[0].as_f64()));
        }
        let on_support: Vec<bool> = ev.iter().map(|&e| e > tol * scale).collect();
        let roots: Vec<T> = ev.iter().map(|&e| e.max(T::zero()).sqrt()).collect();
        let inv_roots: Vec<T> = ev
            .iter()
            .zip(&on_support)
            .map(|(&e, &s)| if s { T::one() / e.sqrt() } else { T::zero() })
            .collect();
        let proj: Vec<T> = on_support
            .iter()
            .map(|&s| if s { T::one() } else { T::zero() })
            .collect();
        Ok(Self {
            sqrt_sigma: Operator(spectral_function(&vecs, &roots)),
            inv_sqrt_sigma: Operator(spectral_function(&vecs, &inv_roots)),
            support: Operator(spectral_function(&vecs, &proj)),
            sigma,
            tol,
        })
    }

    pub fn sigma(&self) -> &Operator<T> {
        &self.sigma
    }

    pub fn sqrt_sigma(&self) -> &Operator<T> {
        &self.sqrt_sigma
    }

    pub fn inv_sqrt_sigma(&self) -> &Operator<T> {
        &self.inv_sqrt_sigma
    }

    pub fn support_projector(&self) -> &Operator<T> {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn is_full_rank(&self) -> bool {
        let tr = self.support.trace().re;
        (tr - T::usize_lit(self.dim())).abs() < T::lit(0.5)
    }

    pub fn distort(&self, x: &Operator<T>) -> Operator<T> {
        let s = self.sqrt_sigma.matrix();
        Operator(s * x.matrix() * s)
    }

    pub fn undistort(&self, x: &Operator<T>) -> Result<Operator<T>> {
        let p = self.support.matrix();
        let leak = (x.matrix() - p * x.matrix() * p).norm();
        if leak > self.tol * x.norm().max(T::one()) {
            return Err(QhmError::SupportViolation(leak.as_f64()));
        }
        let s = self.inv_sqrt_sigma.matrix();
        Ok(Operator(s * x.matrix() * s))
    }

    /// Modular action `sigma^{1/2} X sigma^{-1/2}`.
    pub fn modular(&self, x: &Operator<T>) -> Operator<T> {
        Operator(self.sqrt_sigma.matrix() * x.matrix() * self.inv_sqrt_sigma.matrix())
    }

    /// Weighted product `X sigma^{-1} Y`.
    pub fn weighted_product(&self, x: &Operator<T>, y: &Operator<T>) -> Operator<T> {
        let inv = self.inv_sqrt_sigma.matrix();
        Operator(x.matrix() * inv * inv * y.matrix())
    }

    /// `D_sigma` as a superoperator (transfer `(sigma^{1/2})^T ⊗ sigma^{1/2}`).
    pub fn as_superoperator(&self) -> Superoperator<T> {
        let s = self.sqrt_sigma.matrix();
        Superoperator::from_transfer(self.dim(), self.dim(), s.transpose().kronecker(s))
            .expect("square transfer")
    }
}

/// Orthonormal basis (columns, `n x r`) of the sum of supports of `ops`.
pub fn support_basis<T: Real>(ops: &[Operator<T>], tol: T) -> Result<CMatrix<T>> {
    let first = ops.first().ok_or(QhmError::Empty("support of an empty set"))?;
    let n = first.dim();
    let mut stacked = CMatrix::zeros(n, 2 * n * ops.len());
    for (k, op) in ops.iter().enumerate() {
        if op.dim() != n {
            return Err(QhmError::DimensionMismatch {
                expected: n,
                got: op.dim(),
            });
        }
        // supp(X) = ker(X)^⊥ = range(X^†); include range(X) for non-Hermitian X.
        stacked
            .view_mut((0, 2 * k * n), (n, n))
            .copy_from(&op.matrix().adjoint());
        stacked
            .view_mut((0, (2 * k + 1) * n), (n, n))
            .copy_from(op.matrix());
    }
    Ok(orthonormal_range(&stacked, tol))
}

/// Orthogonal projector onto `Σ_i supp(X_i)`.
pub fn support_projector<T: Real>(ops: &[Operator<T>], tol: T) -> Result<Operator<T>> {
    let b = support_basis(ops, tol)?;
    Ok(Operator(&b * b.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{random_density, random_hermitian, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pauli(k: usize) -> Operator<f64> {
        match k {
            0 => Operator::from_rows(2, &[(1., 0.), (0., 0.), (0., 0.), (1., 0.)]),
            1 => Operator::from_rows(2, &[(0., 0.), (1., 0.), (1., 0.), (0., 0.)]),
            2 => Operator::from_rows(2, &[(0., 0.), (0., -1.), (0., 1.), (0., 0.)]),
            _ => Operator::from_rows(2, &[(1., 0.), (0., 0.), (0., 0.), (-1., 0.)]),
        }
    }

    #[test]
    fn hs_inner_basics() {
        let i2 = Operator::<f64>::identity(2);
        assert!((hs_inner(&i2, &i2).unwrap().re - 2.0).abs() < 1e-15);
        assert!(hs_inner(&pauli(1), &pauli(2)).unwrap().norm() < 1e-15);
        assert!(matches!(
            hs_inner(&i2, &Operator::identity(3)),
            Err(QhmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hs_inner_matches_trace_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Operator<f64> = random_hermitian(4, &mut rng);
        let y: Operator<f64> = random_hermitian(4, &mut rng);
        let direct = (x.dagger().matrix() * y.matrix()).trace();
        assert!((hs_inner(&x, &y).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn weighted_inner_scaling_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Operator<f64> = random_hermitian(3, &mut rng);
        let y: Operator<f64> = random_hermitian(3, &mut rng);
        let id = Superoperator::identity(3);
        let hs = hs_inner(&x, &y).unwrap();
        assert!((weighted_inner(&id, &x, &y, 1e-9).unwrap() - hs).norm() < 1e-12);

        let mixed = DistortionMap::new(Operator::identity(3).scale(1.0 / 3.0), 1e-9).unwrap();
        let w = weighted_inner(&mixed.as_superoperator(), &x, &y, 1e-9).unwrap();
        assert!((w - hs / 3.0).norm() < 1e-12);
    }

    #[test]
    fn weighted_inner_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma: Operator<f64> = random_density(4, &mut rng);
        let x: Operator<f64> = random_hermitian(4, &mut rng);
        let y: Operator<f64> = random_hermitian(4, &mut rng);
        let d = DistortionMap::new(sigma.clone(), 1e-9).unwrap();
        let s = hermitian_sqrt(&sigma, 1e-9).unwrap();
        let direct = (x.dagger().matrix() * s.matrix() * y.matrix() * s.matrix()).trace();
        let w = weighted_inner(&d.as_superoperator(), &x, &y, 1e-9).unwrap();
        assert!((w - direct).norm() < 1e-12);
    }

    #[test]
    fn weighted_inner_rejects_non_positive() {
        let x = Operator::<f64>::identity(2);
        let zero = Superoperator::from_transfer(2, 2, CMatrix::zeros(4, 4)).unwrap();
        assert!(weighted_inner(&zero, &x, &x, 1e-9).is_err());
    }

    #[test]
    fn sqrt_examples() {
        let i3 = Operator::<f64>::identity(3);
        assert!((hermitian_sqrt(&i3, 1e-9).unwrap().matrix() - i3.matrix()).norm() < 1e-14);
        let d = Operator::<f64>::from_real_diagonal(&[4.0, 9.0]);
        let r = hermitian_sqrt(&d, 1e-9).unwrap();
        let expected = Operator::<f64>::from_real_diagonal(&[2.0, 3.0]);
        assert!((r.matrix() - expected.matrix()).norm() < 1e-12);
        let neg = Operator::<f64>::from_real_diagonal(&[1.0, -0.5]);
        assert!(matches!(hermitian_sqrt(&neg, 1e-9), Err(QhmError::NotPositive(_))));
    }

    #[test]
    fn sqrt_clips_tiny_negative_and_keeps_support() {
        let p = Operator::<f64>::from_real_diagonal(&[1.0, -1e-13, 0.0]);
        let r = hermitian_sqrt(&p, 1e-9).unwrap();
        assert!(r.matrix()[(1, 1)].norm() == 0.0);
        assert!((r.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distortion_example_after_distorted_algebra_identity() {
        // rho = xi ⊗ I with xi = 2 I + sigma_z: D_rho^{-1}(xi ⊗ sigma_x) = I ⊗ sigma_x.
        let xi = pauli(0).scale(2.0).matrix() + pauli(3).matrix();
        let rho = Operator::from(xi.kronecker(pauli(0).matrix()));
        let d = DistortionMap::new(rho, 1e-9).unwrap();
        let x = Operator::from(xi.kronecker(pauli(1).matrix()));
        let back = d.undistort(&x).unwrap();
        let expected = pauli(0).matrix().kronecker(pauli(1).matrix());
        assert!((back.matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn identity_distortion_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Operator<f64> = random_hermitian(3, &mut rng);
        let d = DistortionMap::new(Operator::identity(3), 1e-9).unwrap();
        assert!((d.distort(&x).matrix() - x.matrix()).norm() < 1e-14);
    }

    #[test]
    fn undistort_rejects_support_leak() {
        let sigma = Operator::<f64>::from_real_diagonal(&[1.0, 0.0]);
        let d = DistortionMap::new(sigma, 1e-9).unwrap();
        assert!(matches!(
            d.undistort(&Operator::identity(2)),
            Err(QhmError::SupportViolation(_))
        ));
        let inside = Operator::<f64>::from_real_diagonal(&[3.0, 0.0]);
        assert!(d.undistort(&inside).is_ok());
    }

    #[test]
    fn support_projector_examples() {
        let p = support_projector(&[Operator::<f64>::identity(3)], 1e-9).unwrap();
        assert!((p.matrix() - CMatrix::identity(3, 3)).norm() < 1e-12);
        let a = Operator::<f64>::from_real_diagonal(&[1.0, 0.0, 0.0]);
        let b = Operator::<f64>::from_real_diagonal(&[0.0, 1.0, 0.0]);
        let p = support_projector(&[a, b], 1e-9).unwrap();
        let expected = Operator::<f64>::from_real_diagonal(&[1.0, 1.0, 0.0]);
        assert!((p.matrix() - expected.matrix()).norm() < 1e-12);
        assert!(support_projector::<f64>(&[], 1e-9).is_err());
    }

    #[test]
    fn rank_deficient_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Operator<f64> = random_psd(5, 2, &mut rng);
        let r = hermitian_sqrt(&p, 1e-9).unwrap();
        let err = (r.matrix() * r.matrix() - p.matrix()).norm() / p.norm();
        assert!(err < 1e-10);
        let sp = support_projector(&[p.clone()], 1e-9).unwrap();
        let sr = support_projector(&[r], 1e-9).unwrap();
        assert!((sp.matrix() - sr.matrix()).norm() < 1e-8);
    }

    #[test]
    fn partial_traces() {
        let a = CMatrix::<f64>::from_fn(2, 2, |i, j| creal((i * 2 + j) as f64 + 1.0));
        let b = CMatrix::<f64>::from_fn(3, 3, |i, j| cplx((i + j) as f64, (i as f64) - (j as f64)));
        let ab = a.kronecker(&b);
        let ta = partial_trace_second(&ab, 2, 3);
        let tb = partial_trace_first(&ab, 2, 3);
        assert!((ta - a.scale(1.0) * b.trace()).norm() < 1e-12);
        assert!((tb - b * a.trace()).norm() < 1e-12);
    }
}
