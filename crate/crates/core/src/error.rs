use thiserror::Error;

#[derive(Debug, Error)]
pub enum QhmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator is not Hermitian (relative residual {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("operator is not a density matrix: {0}")]
    NotDensity(String),

    #[error("map is not CPTP: min Choi eigenvalue {min_choi_eig:.3e}, TP residual {tp_residual:.3e}")]
    NotCptp { min_choi_eig: f64, tp_residual: f64 },

    #[error("operator leaks outside the support of the distortion state (residual {0:.3e})")]
    SupportViolation(f64),

    #[error("superoperator is not positive definite: {0}")]
    NotPositiveSuperoperator(String),

    #[error("no positive-definite element found in the generating subspace")]
    NoPositiveDefinite,

    #[error("subspace is not invariant under the dynamics (residual {0:.3e})")]
    NotInvariant(f64),

    #[error("algebra is not closed (residual {0:.3e})")]
    NotClosed(f64),

    #[error("algebra must be unital on the full space for this operation")]
    NotUnital,

    #[error("Wedderburn decomposition failed after {attempts} attempts (last residual {residual:.3e})")]
    Wedderburn { attempts: usize, residual: f64 },

    #[error("invalid factor state for block {block}: {reason}")]
    FactorState { block: usize, reason: String },

    #[error("internal residual guard tripped in {stage}: residual {residual:.3e}")]
    Residual { stage: &'static str, residual: f64 },

    #[error("certificate does not match the model: {0}")]
    CertificateMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QhmError>;
