//! Linear maps between operator spaces, stored as column-stacking transfer
//! matrices with an optional Kraus representation.

use crate::error::{QhmError, Result};
use crate::linalg::{hermitian_eigen, CMatrix, Operator};
use crate::scalar::Real;
use nalgebra::ComplexField;

/// A linear map `B(C^in) -> B(C^out)`.
#[derive(Clone, Debug)]
pub struct Superoperator<T: Real> {
    in_dim: usize,
    out_dim: usize,
    transfer: CMatrix<T>,
    kraus: Option<Vec<CMatrix<T>>>,
}

/// Outcome of a CPTP check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CptpReport {
    pub is_cp: bool,
    pub is_tp: bool,
    pub min_choi_eig: f64,
    pub tp_residual: f64,
}

impl CptpReport {
    pub fn is_cptp(&self) -> bool {
        self.is_cp && self.is_tp
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_cptp() {
            Ok(())
        } else {
            Err(QhmError::NotCptp {
                min_choi_eig: self.min_choi_eig,
                tp_residual: self.tp_residual,
            })
        }
    }
}

fn transfer_from_kraus<T: Real>(ops: &[CMatrix<T>]) -> CMatrix<T> {
    let (out, inn) = ops[0].shape();
    let mut t = CMatrix::zeros(out * out, inn * inn);
    for k in ops {
        t += k.conjugate().kronecker(k);
    }
    t
}

impl<T: Real> Superoperator<T> {
    /// Builds `X -> Σ_k K_k X K_k^†`; every `K_k` must be `out x in`.
    pub fn from_kraus(ops: Vec<CMatrix<T>>) -> Result<Self> {
        let first = ops.first().ok_or(QhmError::Empty("Kraus list"))?;
        let (out, inn) = first.shape();
        if out == 0 || inn == 0 {
            return Err(QhmError::InvalidParameter("zero-sized Kraus operator".into()));
        }
        for k in &ops {
            if k.shape() != (out, inn) {
                return Err(QhmError::DimensionMismatch {
                    expected: out * inn,
                    got: k.nrows() * k.ncols(),
                });
            }
        }
        Ok(Self {
            in_dim: inn,
            out_dim: out,
            transfer: transfer_from_kraus(&ops),
            kraus: Some(ops),
        })
    }

    pub fn from_transfer(in_dim: usize, out_dim: usize, transfer: CMatrix<T>) -> Result<Self> {
        if transfer.shape() != (out_dim * out_dim, in_dim * in_dim) {
            return Err(QhmError::DimensionMismatch {
                expected: out_dim * out_dim * in_dim * in_dim,
                got: transfer.nrows() * transfer.ncols(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            transfer,
            kraus: None,
        })
    }

    /// Attaches a Kraus set after checking it reproduces the transfer matrix.
    pub fn with_kraus(mut self, ops: Vec<CMatrix<T>>, tol: T) -> Result<Self> {
        let other = Self::from_kraus(ops)?;
        if other.in_dim != self.in_dim || other.out_dim != self.out_dim {
            return Err(QhmError::DimensionMismatch {
                expected: self.in_dim,
                got: other.in_dim,
            });
        }
        let diff = (&other.transfer - &self.transfer).norm();
        if diff > tol * self.transfer.norm().max(T::one()) {
            return Err(QhmError::Parse(format!(
                "Kraus and transfer representations disagree by {:.3e}",
                diff.as_f64()
            )));
        }
        self.kraus = other.kraus;
        Ok(self)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_kraus(vec![CMatrix::identity(n, n)]).expect("non-empty")
    }

    pub fn unitary(u: &CMatrix<T>) -> Self {
        Self::from_kraus(vec![u.clone()]).expect("non-empty")
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn transfer(&self) -> &CMatrix<T> {
        &self.transfer
    }

    pub fn kraus(&self) -> Option<&[CMatrix<T>]> {
        self.kraus.as_deref()
    }

    pub fn apply(&self, x: &Operator<T>) -> Result<Operator<T>> {
        if x.dim() != self.in_dim {
            return Err(QhmError::DimensionMismatch {
                expected: self.in_dim,
                got: x.dim(),
            });
        }
        let v = &self.transfer * x.vec();
        Ok(Operator::from_vec(v.as_slice(), self.out_dim))
    }

    /// Hilbert–Schmidt adjoint.
    pub fn adjoint(&self) -> Self {
        Self {
            in_dim: self.out_dim,
            out_dim: self.in_dim,
            transfer: self.transfer.adjoint(),
            kraus: self
                .kraus
                .as_ref()
                .map(|ks| ks.iter().map(|k| k.adjoint()).collect()),
        }
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &Self, inner: &Self) -> Result<Self> {
        if inner.out_dim != outer.in_dim {
            return Err(QhmError::DimensionMismatch {
                expected: outer.in_dim,
                got: inner.out_dim,
            });
        }
        let kraus = match (&outer.kraus, &inner.kraus) {
            // Keep products only while they stay below the Choi-rank bound.
            (Some(a), Some(b)) if a.len() * b.len() <= inner.in_dim * outer.out_dim => Some(
                a.iter()
                    .flat_map(|ka| b.iter().map(move |kb| ka * kb))
                    .collect(),
            ),
            _ => None,
        };
        Ok(Self {
            in_dim: inner.in_dim,
            out_dim: outer.out_dim,
            transfer: &outer.transfer * &inner.transfer,
            kraus,
        })
    }

    /// `self ∘ self ∘ ... ` (`t` times); `t = 0` gives the identity.
    pub fn power(&self, t: usize) -> Result<Self> {
        if self.in_dim != self.out_dim {
            return Err(QhmError::DimensionMismatch {
                expected: self.in_dim,
                got: self.out_dim,
            });
        }
        let mut acc = Self::identity(self.in_dim);
        for _ in 0..t {
            acc = Self::compose(self, &acc)?;
        }
        Ok(acc)
    }

    /// Choi matrix `Σ_{ij} |i><j| ⊗ S(|i><j|)`, of size `(in * out)^2`.
    pub fn choi(&self) -> Operator<T> {
        let (n, m) = (self.in_dim, self.out_dim);
        let mut c = CMatrix::zeros(n * m, n * m);
        for i in 0..n {
            for j in 0..n {
                // column of the transfer matrix for vec(|i><j|) is i + j n
                let col = self.transfer.column(i + j * n);
                for a in 0..m {
                    for b in 0..m {
                        c[(i * m + a, j * m + b)] = col[a + b * m];
                    }
                }
            }
        }
        Operator::from(c)
    }

    pub fn validate_cptp(&self, tol: T) -> CptpReport {
        let choi = self.choi();
        let (ev, _) = hermitian_eigen(choi.matrix());
        let min = ev.first().copied().unwrap_or_else(T::zero);
        let scale = ev.iter().fold(T::one(), |a, &b| a.max(b.abs()));
        let herm = choi.hermitian_residual();
        let id_out = Operator::identity(self.out_dim);
        let dual = self
            .adjoint()
            .apply(&id_out)
            .expect("dimension of the adjoint");
        let tp = (dual.matrix() - CMatrix::identity(self.in_dim, self.in_dim)).norm();
        CptpReport {
            is_cp: herm <= tol && min >= -tol * scale,
            is_tp: tp <= tol * T::usize_lit(self.in_dim).sqrt().max(T::one()),
            min_choi_eig: min.as_f64(),
            tp_residual: tp.as_f64(),
        }
    }

    /// Kraus operators read off the Choi eigendecomposition; eigenvalues below
    /// `tol * λ_max` are dropped.
    pub fn kraus_from_choi(&self, tol: T) -> Result<Vec<CMatrix<T>>> {
        let (n, m) = (self.in_dim, self.out_dim);
        let choi = self.choi();
        let (ev, vecs) = hermitian_eigen(choi.matrix());
        let scale = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        let min = ev.first().copied().unwrap_or_else(T::zero);
        if choi.hermitian_residual() > tol || min < -tol * scale.max(T::one()) {
            return Err(QhmError::NotCptp {
                min_choi_eig: min.as_f64(),
                tp_residual: f64::NAN,
            });
        }
        let mut out = Vec::new();
        for (k, &lambda) in ev.iter().enumerate().rev() {
            if lambda <= tol * scale {
                continue;
            }
            let s = lambda.sqrt();
            let v = vecs.column(k);
            out.push(CMatrix::from_fn(m, n, |a, i| v[i * m + a].scale(s)));
        }
        if out.is_empty() {
            out.push(CMatrix::zeros(m, n));
        }
        Ok(out)
    }

    /// Kraus operators, taken from the stored representation when present.
    pub fn kraus_or_derive(&self, tol: T) -> Result<Vec<CMatrix<T>>> {
        match &self.kraus {
            Some(k) => Ok(k.clone()),
            None => self.kraus_from_choi(tol),
        }
    }

    /// Number of Kraus operators needed (rank of the Choi matrix).
    pub fn choi_rank(&self, tol: T) -> usize {
        let (ev, _) = hermitian_eigen(self.choi().matrix());
        let scale = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        ev.iter().filter(|&&e| e > tol * scale).count()
    }

    /// Frobenius distance between transfer matrices.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if self.transfer.shape() != other.transfer.shape() {
            return Err(QhmError::DimensionMismatch {
                expected: self.in_dim,
                got: other.in_dim,
            });
        }
        Ok((&self.transfer - &other.transfer).norm())
    }
}
