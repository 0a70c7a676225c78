//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trait `{trait_name}` has zero sample variance; correlation undefined")]
    DegenerateTrait { trait_name: String },

    #[error("need at least 2 rows to estimate a correlation, got {n}")]
    TooFewRows { n: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row},{col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("eigendecomposition failed to converge within {max_iter} iterations")]
    ConvergenceFailure { max_iter: usize },

    #[error("invalid cumulative-sum index k={k} for {e} components (need 1 <= k <= E)")]
    InvalidK { e: usize, k: usize },

    #[error("characteristic-function inversion failed: {reason} (requested accuracy {requested:\
             e})")]
    IntegrationFailure { reason: String, requested: f64 },

    #[error("saddlepoint root not bracketed for x={x}")]
    RootNotBracketed { x: f64 },

    #[error("p-values and weights mismatch: {reason}")]
    WeightMismatch { reason: String },

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {reason}")]
    DimensionMismatch { reason: String },

    #[error("correlation parameter rho={rho} invalid for {kind} with T={t}")]
    InvalidRho { kind: String, rho: f64, t: usize },

    #[error("index {index} out of range 1..={t}")]
    IndexOutOfRange { index: usize, t: usize },

    #[error("degenerate variance: 1'R1 = {value} <= 0")]
    DegenerateVariance { value: f64 },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: String, reason: String },

    #[error("{path}:{line}: expected {expected} fields, found {found}")]
    RowWidthMismatch { path: String, line: usize, expected: usize, found: usize },

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: String },

    #[error("{path}:{line}: p-value {value} outside (0, 1]")]
    OutOfRangeP { path: String, line: usize, value: f64 },

    #[error("sign file does not match p-value file: {reason}")]
    ShapeMismatch { reason: String },

    #[error("trait names in correlation file do not match z-score header: {reason}")]
    TraitNameMismatch { reason: String },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error("{path}: parse error at line {line}: {reason}")]
    FileParse { path: String, line: usize, reason: String },

    #[error("cannot resolve FPR {fpr_max} with {n_null} null replicates")]
    InsufficientNullReplicates { fpr_max: f64, n_null: usize },

    #[error("worker panicked while processing block {block}")]
    WorkerPanic { block: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
