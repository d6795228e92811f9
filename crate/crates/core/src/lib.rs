//! Exact, CPTP-preserving model reduction for discrete-time quantum hidden
//! Markov (QHM) models.
//!
//! A QHM model is a CPTP map `A` on `n x n` density operators, a linear output
//! map `y_i = tr(C_i^† rho)` and a set of initial states. The reductions in
//! [`reduction`] produce a smaller QHM model together with a pair of CPTP maps
//! (reduction `R`, injection `J`) witnessing that both models emit identical
//! outputs at every time step.
//!
//! The numerical core is generic over the real scalar type (see [`Real`]);
//! `f64` aliases are provided at the crate root for everyday use.
//!
//! Operators are vectorized by column stacking throughout: `vec(X)[i + j n] =
//! X[i, j]`, so that `vec(K X K^†) = (conj(K) ⊗ K) vec(X)`.

pub mod algebra;
pub mod channels;
pub mod config;
pub mod error;
pub mod generators;
pub mod io;
pub mod linalg;
pub mod model;
pub mod projections;
pub mod reduction;
pub mod scalar;
pub mod subspace;

pub use algebra::{BlockDecomposition, CompatibilityReport, DistortedAlgebra, MatrixAlgebra};
pub use channels::{CptpReport, Superoperator};
pub use config::{Config, Order};
pub use error::{QhmError, Result};
pub use linalg::{CMatrix, DistortionMap, Operator};
pub use model::QhmModel;
pub use projections::{ConditionalExpectation, Factorization};
pub use reduction::{
    EquivalenceReport, ReductionCertificate, ReductionStep, StepDiagnostics, StepKind,
};
pub use scalar::Real;
pub use subspace::{LinearReduction, OperatorSubspace};

pub type Operator64 = Operator<f64>;
pub type Superoperator64 = Superoperator<f64>;
pub type OperatorSubspace64 = OperatorSubspace<f64>;
pub type MatrixAlgebra64 = MatrixAlgebra<f64>;
pub type QhmModel64 = QhmModel<f64>;
pub type ReductionCertificate64 = ReductionCertificate<f64>;
pub type Config64 = Config<f64>;

pub type Operator32 = Operator<f32>;
pub type Superoperator32 = Superoperator<f32>;
pub type QhmModel32 = QhmModel<f32>;
pub type Config32 = Config<f32>;
