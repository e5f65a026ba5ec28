use thiserror::Error;

/// Errors raised by the unified skew-t routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SutError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("invalid parameters: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidParams(Vec<crate::params::Violation>),

    #[error("degrees of freedom {nu} too small: need nu > {required}")]
    DofTooSmall { nu: f64, required: f64 },

    #[error("truncation probability {prob:e} below {threshold:e}")]
    AcceptanceTooLow { prob: f64, threshold: f64 },

    #[error("normalising probability {prob:e} underflows")]
    DenominatorUnderflow { prob: f64 },

    #[error("operation requires tau = 0")]
    TauMustBeZero,

    #[error("Psi = Omega - H Gamma H^T is not positive semi-definite (min pivot {min_pivot:e})")]
    PsiNotPsd { min_pivot: f64 },

    #[error("matrix is rank deficient (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },

    #[error("extended latent correlation matrix is not positive definite")]
    ExtendedGammaNotPd,

    #[error("parameters lack the block structure needed for latent reduction: {0}")]
    StructureNotReducible(String),

    #[error("canonical form does not exist: {0}")]
    CanonicalNotExists(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SutError>;
