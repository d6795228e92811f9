//! Operator subspaces with Hilbert–Schmidt orthonormal bases, Krylov
//! generation of reachable and observable spaces, and the linear (non-CPTP)
//! minimal reduction used as a lower bound.

use crate::channels::Superoperator;
use crate::error::{QhmError, Result};
use crate::linalg::{null_space, orthonormal_range, svd_sorted, CMatrix, CVector, Operator};
use crate::model::QhmModel;
use crate::scalar::Real;
use nalgebra::ComplexField;

/// A subspace of `B(C^n)` with an orthonormal basis stored as the columns of
/// an `n^2 x r` matrix of vectorized operators.
#[derive(Clone, Debug)]
pub struct OperatorSubspace<T: Real> {
    n: usize,
    q: CMatrix<T>,
}

impl<T: Real> OperatorSubspace<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            q: CMatrix::zeros(n * n, 0),
        }
    }

    /// All of `B(C^n)`, spanned by matrix units.
    pub fn full(n: usize) -> Self {
        Self {
            n,
            q: CMatrix::identity(n * n, n * n),
        }
    }

    /// Orthonormal basis of `span(ops)`; rank is decided by singular values
    /// above `tol * sigma_max`. An empty list gives the zero subspace.
    pub fn span(n: usize, ops: &[Operator<T>], tol: T) -> Result<Self> {
        if ops.is_empty() {
            return Ok(Self::zero(n));
        }
        let mut stacked = CMatrix::zeros(n * n, ops.len());
        for (k, op) in ops.iter().enumerate() {
            if op.dim() != n {
                return Err(QhmError::DimensionMismatch {
                    expected: n,
                    got: op.dim(),
                });
            }
            stacked.set_column(k, &op.vec());
        }
        Ok(Self {
            n,
            q: orthonormal_range(&stacked, tol),
        })
    }

    /// Wraps columns that are already orthonormal.
    pub(crate) fn from_orthonormal_columns(n: usize, q: CMatrix<T>) -> Self {
        debug_assert_eq!(q.nrows(), n * n);
        Self { n, q }
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    /// The `n^2 x r` matrix of vectorized basis elements.
    pub fn columns(&self) -> &CMatrix<T> {
        &self.q
    }

    pub fn basis_element(&self, k: usize) -> Operator<T> {
        Operator::from_vec(self.q.column(k).as_slice(), self.n)
    }

    pub fn basis(&self) -> Vec<Operator<T>> {
        (0..self.rank()).map(|k| self.basis_element(k)).collect()
    }

    /// `‖G − I‖_F` for the Gram matrix `G` of the basis.
    pub fn gram_residual(&self) -> T {
        let g = self.q.adjoint() * &self.q;
        (g - CMatrix::identity(self.rank(), self.rank())).norm()
    }

    fn check(&self, x: &Operator<T>) -> Result<()> {
        if x.dim() != self.n {
            return Err(QhmError::DimensionMismatch {
                expected: self.n,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Coordinates `⟨b_k, X⟩_HS`.
    pub fn coordinates(&self, x: &Operator<T>) -> Result<CVector<T>> {
        self.check(x)?;
        Ok(self.q.adjoint() * x.vec())
    }

    /// Orthogonal projection `Σ_k b_k ⟨b_k, X⟩_HS`.
    pub fn project(&self, x: &Operator<T>) -> Result<Operator<T>> {
        let c = self.coordinates(x)?;
        let v = &self.q * c;
        Ok(Operator::from_vec(v.as_slice(), self.n))
    }

    /// `‖X − Π(X)‖_F`.
    pub fn residual(&self, x: &Operator<T>) -> Result<T> {
        Ok((x.matrix() - self.project(x)?.matrix()).norm())
    }

    /// Whether `X` lies in the span up to `tol * max(‖X‖, 1)`.
    pub fn contains(&self, x: &Operator<T>, tol: T) -> Result<bool> {
        Ok(self.residual(x)? <= tol * x.norm().max(T::one()))
    }

    /// Largest residual of `other`'s basis elements against `self`.
    pub fn containment_residual(&self, other: &Self) -> T {
        if other.rank() == 0 {
            return T::zero();
        }
        let p = &self.q * (self.q.adjoint() * &other.q);
        (&other.q - p)
            .column_iter()
            .fold(T::zero(), |a, c| a.max(c.norm()))
    }

    pub fn contains_subspace(&self, other: &Self, tol: T) -> bool {
        self.n == other.n && self.containment_residual(other) <= tol
    }

    /// Equality as subspaces: equal rank and mutual containment.
    pub fn same_as(&self, other: &Self, tol: T) -> bool {
        self.rank() == other.rank()
            && self.contains_subspace(other, tol)
            && other.contains_subspace(self, tol)
    }

    /// Sum of subspaces.
    pub fn add(&self, other: &Self, tol: T) -> Result<Self> {
        self.same_ambient(other)?;
        let mut stacked = CMatrix::zeros(self.n * self.n, self.rank() + other.rank());
        stacked.columns_mut(0, self.rank()).copy_from(&self.q);
        stacked
            .columns_mut(self.rank(), other.rank())
            .copy_from(&other.q);
        Ok(Self {
            n: self.n,
            q: orthonormal_range(&stacked, tol),
        })
    }

    /// Intersection via principal angles: the directions whose cosine with
    /// the other subspace exceeds `1 - tol`.
    pub fn intersect(&self, other: &Self, tol: T) -> Result<Self> {
        self.same_ambient(other)?;
        if self.rank() == 0 || other.rank() == 0 {
            return Ok(Self::zero(self.n));
        }
        let overlap = self.q.adjoint() * &other.q;
        let (u, s, _) = svd_sorted(&overlap);
        let k = s.iter().take_while(|&&c| T::one() - c <= tol).count();
        let q = &self.q * u.columns(0, k);
        Ok(Self { n: self.n, q })
    }

    /// Hilbert–Schmidt orthogonal complement in `B(C^n)`.
    pub fn complement(&self, tol: T) -> Self {
        if self.rank() == 0 {
            return Self::full(self.n);
        }
        Self {
            n: self.n,
            q: null_space(&self.q.adjoint(), tol),
        }
    }

    fn same_ambient(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(QhmError::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }

    /// Largest `‖(1 − Π) S(b_k)‖` over basis elements.
    pub fn invariance_residual(&self, map: &Superoperator<T>) -> T {
        if self.rank() == 0 {
            return T::zero();
        }
        let img = map.transfer() * &self.q;
        let p = &self.q * (self.q.adjoint() * &img);
        (img - p).column_iter().fold(T::zero(), |a, c| a.max(c.norm()))
    }
}

/// Krylov span `span{S^t(x) : x ∈ seeds, t ≥ 0}`, built in breadth-first
/// sweeps; a sweep that adds no new direction ends the iteration.
pub fn krylov<T: Real>(
    n: usize,
    seeds: &[Operator<T>],
    map: &Superoperator<T>,
    tol: T,
) -> Result<OperatorSubspace<T>> {
    if map.in_dim() != n || map.out_dim() != n {
        return Err(QhmError::DimensionMismatch {
            expected: n,
            got: map.in_dim(),
        });
    }
    let nn = n * n;
    let mut cols: Vec<CVector<T>> = Vec::new();
    let mut frontier: Vec<CVector<T>> = Vec::new();
    for s in seeds {
        if s.dim() != n {
            return Err(QhmError::DimensionMismatch {
                expected: n,
                got: s.dim(),
            });
        }
        let norm = s.norm();
        if norm > T::zero() {
            let v = s.vec().unscale(norm);
            if let Some(dir) = orthogonalize(&cols, v, tol) {
                cols.push(dir.clone());
                frontier.push(dir);
            }
        }
    }
    // Cayley–Hamilton: depth n^2 suffices; rank stabilization usually stops earlier.
    for _ in 0..nn {
        if frontier.is_empty() || cols.len() == nn {
            break;
        }
        let mut next = Vec::new();
        for x in &frontier {
            let y = map.transfer() * x;
            if let Some(dir) = orthogonalize(&cols, y, tol) {
                cols.push(dir.clone());
                next.push(dir);
            }
        }
        frontier = next;
    }
    let mut q = CMatrix::zeros(nn, cols.len());
    for (k, c) in cols.iter().enumerate() {
        q.set_column(k, c);
    }
    Ok(OperatorSubspace::from_orthonormal_columns(n, q))
}

/// Classical Gram–Schmidt with one re-orthogonalization pass. Returns the
/// normalized residual when it exceeds `tol * max(‖y‖, 1)`.
pub(crate) fn orthogonalize<T: Real>(cols: &[CVector<T>], y: CVector<T>, tol: T) -> Option<CVector<T>> {
    let scale = y.norm().max(T::one());
    let mut r = y;
    for _ in 0..2 {
        for c in cols {
            let coef = c.dotc(&r);
            r.axpy(-coef, c, num_complex::Complex::new(T::one(), T::zero()));
        }
    }
    let norm = r.norm();
    if norm > tol * scale {
        Some(r.unscale(norm))
    } else {
        None
    }
}

/// `span{A^t(rho_0) : rho_0 ∈ S, t ≥ 0}`.
pub fn reachable_subspace<T: Real>(m: &QhmModel<T>, tol: T) -> Result<OperatorSubspace<T>> {
    krylov(m.dim(), m.initial_states(), m.map(), tol)
}

/// `N^⊥ = span{A^{†t}(C_i) : t ≥ 0}`.
pub fn observable_complement<T: Real>(m: &QhmModel<T>, tol: T) -> Result<OperatorSubspace<T>> {
    krylov(m.dim(), m.output_ops(), &m.map().adjoint(), tol)
}

/// Linear minimal realization restricted to the effective subspace
/// `E = R ⊖ (R ∩ N)`, in coordinates of an orthonormal basis of `E`.
#[derive(Clone, Debug)]
pub struct LinearReduction<T: Real> {
    pub eff_dim: usize,
    pub effective: OperatorSubspace<T>,
    /// `Π_E A Π_E` in `E`-coordinates (`eff_dim x eff_dim`).
    pub a_l: CMatrix<T>,
    /// Rows `⟨C_i, e_k⟩`: the output map on `E` (`#outputs x eff_dim`).
    pub c_l: CMatrix<T>,
    /// Maximal output deviation over the initial states for `t ≤ 2 n^2`.
    pub max_deviation: T,
}

pub fn linear_minimal_reduction<T: Real>(m: &QhmModel<T>, tol: T) -> Result<LinearReduction<T>> {
    let n = m.dim();
    let r = reachable_subspace(m, tol)?;
    let nperp = observable_complement(m, tol)?;
    // Coordinates in R: the null space of Q_{N⊥}^† Q_R is R ∩ N, its
    // complement (within R) is E.
    let effective = if r.rank() == 0 || nperp.rank() == 0 {
        OperatorSubspace::zero(n)
    } else {
        let overlap = nperp.columns().adjoint() * r.columns();
        let (_, s, v) = svd_sorted(&overlap);
        let smax = s.first().copied().unwrap_or_else(T::zero);
        let k = if smax > T::zero() {
            s.iter().take_while(|&&x| x > tol * smax.max(T::one())).count()
        } else {
            0
        };
        OperatorSubspace::from_orthonormal_columns(n, r.columns() * v.columns(0, k))
    };
    let qe = effective.columns();
    let a_l = qe.adjoint() * m.map().transfer() * qe;
    let mut c_l = CMatrix::zeros(m.output_ops().len(), effective.rank());
    for (i, c) in m.output_ops().iter().enumerate() {
        let row = c.vec().adjoint() * qe;
        c_l.set_row(i, &row);
    }
    let horizon = 2 * n * n;
    let mut dev = T::zero();
    for rho in m.initial_states() {
        let full = m.output_trajectory(rho, horizon)?;
        let mut x = qe.adjoint() * rho.vec();
        for y in full.iter() {
            let yl = &c_l * &x;
            for (a, b) in y.iter().zip(yl.iter()) {
                dev = dev.max((a - b).modulus());
            }
            x = &a_l * x;
        }
    }
    Ok(LinearReduction {
        eff_dim: effective.rank(),
        effective,
        a_l,
        c_l,
        max_deviation: dev,
    })
}
