//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by quadrature construction, factorization, estimation,
/// and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("measure must be univariate for this operation, got dim {dim}")]
    MeasureNotUnivariate { dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge after {iterations} implicit-shift iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("eigenvalue tie at index {index} (value {value}); refusing to merge nodes")]
    EigenvalueTie { index: usize, value: f64 },

    #[error("tensor rule would have {requested} nodes, exceeding the budget of {budget}")]
    NodeBudgetExceeded { requested: u128, budget: u64 },

    #[error("length mismatch: {what} has {left} entries but {right} were expected")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("weights do not form a probability vector (sum = {sum})")]
    WeightsNotProbability { sum: f64 },

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("requested {k} iterations but the measure has only {atoms} atoms")]
    KExceedsAtoms { k: usize, atoms: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model evaluation failed at node {node}: {message}")]
    ModelEvaluation { node: usize, message: String },

    #[error("input dimension {dim} out of range: {value} not in [{lo}, {hi}]")]
    OutOfRange {
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate interval in dimension {dim}")]
    DegenerateInterval { dim: usize },

    #[error("requested {r} slices for {n} samples")]
    RExceedsSamples { r: usize, n: usize },

    #[error("degenerate response: all values equal, cannot slice")]
    DegenerateResponse,

    #[error(
        "slice {slice} has {count} samples; at least 2 are needed for the in-slice covariance"
    )]
    SliceTooSmall { slice: usize, count: usize },

    #[error("zero weight at node {index}; cannot recover polynomial values")]
    ZeroWeightNode { index: usize },

    #[error("reference matrix has zero Frobenius norm")]
    ZeroReference,

    #[error("model '{model}' is not standardized; set the standardization override to proceed")]
    NotStandardized { model: String },

    #[error("quadrature convergence study requires a nested Clenshaw-Curtis rule")]
    NonNestedRule,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
