use thiserror::Error;

/// Errors produced by space construction, functionals, estimators and the
/// experiment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alignment error: function has {got} values but the space has {expected} vertices")]
    Alignment { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity error: {requested} vertices requested, cap is {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("vertices {0} and {1} are not connected (infinite resistance)")]
    Disconnected(usize, usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("incomplete report: {0}")]
    IncompleteReport(String),

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
