use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // weights / snapshots
    #[error("model has no layers")]
    EmptyModel,
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("snapshot format error: {0}")]
    FormatError(String),
    #[error("snapshot truncated: header declares {expected} values, payload holds {actual}")]
    TruncationError { expected: u64, actual: u64 },
    #[error("snapshot header error: {0}")]
    HeaderError(String),

    // mds
    #[error("matrix is not symmetric at ({row}, {col})")]
    AsymmetricInput { row: usize, col: usize },
    #[error("requested {requested} eigenpairs from a {n}x{n} matrix")]
    RankError { requested: usize, n: usize },
    #[error("eigensolver did not converge (off-diagonal residual {residual:e})")]
    ConvergenceError { residual: f64 },
    #[error("all retained eigenvalues are non-positive")]
    DegenerateEmbedding,

    // qmcm
    #[error("reference set is empty")]
    EmptyReference,
    #[error("coefficient of variation undefined for zero mean")]
    CvUndefined,
    #[error("sampling source exhausted after {drawn} draws")]
    SourceExhausted { drawn: usize },
    #[error("estimate did not converge")]
    NotConverged,
    #[error("value {0} outside the open interval (0, 1)")]
    DomainError(f64),
    #[error("only {got} query distances available, need at least {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("invalid estimator configuration: {0}")]
    InvalidEstimator(String),

    // infometrics
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("support grew from {before} to {after}")]
    ShrinkViolation { before: u64, after: u64 },
    #[error("contingency table has no positive counts")]
    EmptyTable,
    #[error("bin count mismatch: histogram has {hist} bins, mass vector has {mass}")]
    BinMismatch { hist: usize, mass: usize },
    #[error("cannot fit a normal to a zero-variance histogram")]
    DegenerateFit,
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    // toytrain
    #[error("label restriction keeps no classes")]
    NoClassesLeft,
    #[error("training diverged at step {step}")]
    DivergenceError { step: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    // harness
    #[error("pairing error: {0}")]
    PairingError(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
