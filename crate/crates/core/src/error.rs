//! Crate-wide error type.

use crate::embedding::Role;

#[derive(Debug, thiserror::Error)]
pub enum CbmError {
    #[error("class {0} has no vectors")]
    EmptyClass(u32),
    #[error("duplicate class id {0}")]
    DuplicateClassId(u32),
    #[error("dataset role mismatch: expected {expected:?}, got {actual:?}")]
    RoleMismatch { expected: Role, actual: Role },
    #[error("bad magic bytes (not a CBME file)")]
    BadMagic,
    #[error("unsupported CBME version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated CBME file")]
    TruncatedFile,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("zero vector has no cosine direction")]
    ZeroVector,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("distribution not normalized (sum = {0})")]
    NotNormalized(f64),
    #[error("alpha = {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("empty support set")]
    EmptySupport,
    #[error("empty score vector")]
    EmptyScores,
    #[error("k = {k} exceeds the {available} available neighbor candidates")]
    KTooLarge { k: usize, available: usize },
    #[error("weight system is singular even after regularization")]
    SingularSystem,
    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CbmError>;
