//! The QHM model: dynamics, output operators and initial states.

use crate::channels::Superoperator;
use crate::error::{QhmError, Result};
use crate::linalg::{hs_inner, Operator};
use crate::scalar::Real;
use num_complex::Complex;

/// A discrete-time quantum hidden Markov model.
///
/// Outputs are `y_i(t) = tr(C_i^† A^t(rho_0))`. The `blocks` mask records the
/// block-diagonal structure of the state space: the model lives on
/// `⊕_l B(C^{blocks[l]})` embedded block-diagonally in `B(C^dim)`, so its
/// operator-space dimension is `Σ_l blocks[l]^2`. A freshly built model has the
/// single block `[dim]`.
#[derive(Clone, Debug)]
pub struct QhmModel<T: Real> {
    map: Superoperator<T>,
    output_ops: Vec<Operator<T>>,
    initial_states: Vec<Operator<T>>,
    blocks: Vec<usize>,
    pub label: String,
    pub metadata: String,
}

impl<T: Real> QhmModel<T> {
    /// Builds and validates a model (CPTP dynamics, density initial states).
    pub fn new(
        map: Superoperator<T>,
        output_ops: Vec<Operator<T>>,
        initial_states: Vec<Operator<T>>,
        label: impl Into<String>,
        tol: T,
    ) -> Result<Self> {
        let n = map.in_dim();
        let m = Self::from_parts(map, output_ops, initial_states, vec![n], label.into())?;
        m.validate(tol)?;
        Ok(m)
    }

    /// Builds a model checking only shapes.
    pub fn from_parts(
        map: Superoperator<T>,
        output_ops: Vec<Operator<T>>,
        initial_states: Vec<Operator<T>>,
        blocks: Vec<usize>,
        label: String,
    ) -> Result<Self> {
        let n = map.in_dim();
        if map.out_dim() != n {
            return Err(QhmError::DimensionMismatch {
                expected: n,
                got: map.out_dim(),
            });
        }
        if initial_states.is_empty() {
            return Err(QhmError::Empty("initial state set"));
        }
        for op in output_ops.iter().chain(&initial_states) {
            if op.dim() != n {
                return Err(QhmError::DimensionMismatch {
                    expected: n,
                    got: op.dim(),
                });
            }
        }
        if blocks.iter().sum::<usize>() != n || blocks.contains(&0) {
            return Err(QhmError::InvalidParameter(format!(
                "block mask {blocks:?} does not partition dimension {n}"
            )));
        }
        Ok(Self {
            map,
            output_ops,
            initial_states,
            blocks,
            label,
            metadata: String::new(),
        })
    }

    pub fn validate(&self, tol: T) -> Result<()> {
        self.map.validate_cptp(tol).into_result()?;
        for s in &self.initial_states {
            s.check_density(tol)?;
        }
        Ok(())
    }

    pub fn with_blocks(mut self, blocks: Vec<usize>) -> Result<Self> {
        if blocks.iter().sum::<usize>() != self.dim() || blocks.contains(&0) {
            return Err(QhmError::InvalidParameter(format!(
                "block mask {blocks:?} does not partition dimension {}",
                self.dim()
            )));
        }
        self.blocks = blocks;
        Ok(self)
    }

    pub fn with_metadata(mut self, metadata: impl Into<String>) -> Self {
        self.metadata = metadata.into();
        self
    }

    /// Hilbert-space dimension `n`.
    pub fn dim(&self) -> usize {
        self.map.in_dim()
    }

    /// Dimension of the operator space the model lives on, `Σ_l b_l^2`.
    pub fn operator_dim(&self) -> usize {
        self.blocks.iter().map(|b| b * b).sum()
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn map(&self) -> &Superoperator<T> {
        &self.map
    }

    pub fn output_ops(&self) -> &[Operator<T>] {
        &self.output_ops
    }

    pub fn initial_states(&self) -> &[Operator<T>] {
        &self.initial_states
    }

    /// `(tr(C_i^† rho))_i`.
    pub fn outputs(&self, rho: &Operator<T>) -> Result<Vec<Complex<T>>> {
        self.output_ops.iter().map(|c| hs_inner(c, rho)).collect()
    }

    /// Output vectors for `t = 0..=horizon` starting from `rho0`.
    pub fn output_trajectory(
        &self,
        rho0: &Operator<T>,
        horizon: usize,
    ) -> Result<Vec<Vec<Complex<T>>>> {
        let mut rho = rho0.clone();
        let mut out = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            out.push(self.outputs(&rho)?);
            if t < horizon {
                rho = self.map.apply(&rho)?;
            }
        }
        Ok(out)
    }

    /// States `A^t(rho0)` for `t = 0..=horizon`.
    pub fn state_trajectory(&self, rho0: &Operator<T>, horizon: usize) -> Result<Vec<Operator<T>>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(rho0.clone());
        for _ in 0..horizon {
            let next = self.map.apply(out.last().expect("non-empty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Frobenius norm of the part of `x` outside the block mask.
    pub fn off_block_norm(&self, x: &Operator<T>) -> T {
        off_block_norm(&self.blocks, x)
    }
}

pub(crate) fn block_offsets(blocks: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    blocks
        .iter()
        .map(|b| {
            let o = acc;
            acc += b;
            o
        })
        .collect()
}

pub(crate) fn off_block_norm<T: Real>(blocks: &[usize], x: &Operator<T>) -> T {
    let offs = block_offsets(blocks);
    let mut owner = vec![0usize; x.dim()];
    for (l, (&o, &b)) in offs.iter().zip(blocks).enumerate() {
        for i in o..o + b {
            owner[i] = l;
        }
    }
    let mut acc = T::zero();
    for j in 0..x.dim() {
        for i in 0..x.dim() {
            if owner[i] != owner[j] {
                acc += x.matrix()[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}
