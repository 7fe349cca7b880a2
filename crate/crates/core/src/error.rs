use thiserror::Error;

/// Errors produced by the inference, query and simulation machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate distribution: all weights are zero")]
    DegeneratePmf,

    #[error("invalid distribution: {0}")]
    InvalidPmf(String),

    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(char),

    #[error("symbol index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid trial: {0}")]
    InvalidTrial(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty corpus after normalization")]
    EmptyCorpus,

    #[error("class {class} has {count} samples, at least 2 required")]
    InsufficientClassSamples { class: u8, count: usize },

    #[error("singular covariance matrix for class {0}")]
    SingularCovariance(u8),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cross validation failed: every fold was missing a class")]
    AllFoldsSkipped,

    #[error("infeasible query selection: {0}")]
    Infeasible(String),

    #[error("code matrix assignment failed: {0}")]
    CodeAssignment(String),

    #[error("statistical test not possible: {0}")]
    Statistics(String),
}

pub type Result<T> = std::result::Result<T, Error>;
