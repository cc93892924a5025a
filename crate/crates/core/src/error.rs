use thiserror::Error;

use crate::data::Method;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}: empty cell in column '{column}'")]
    EmptyCell { row: usize, column: String },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("covariate '{covariate}' is not constant within subject '{subject}'")]
    InconsistentCovariate { subject: String, covariate: String },
    #[error("duplicate measurement for subject '{subject}', method {method:?}, replicate {replicate}")]
    Duplicate { subject: String, method: Method, replicate: u32 },
    #[error("subject '{subject}' has no measurements for method {method:?}")]
    MissingMethod { subject: String, method: Method },
    #[error("subject '{subject}', replicate {replicate} has no matching pair")]
    Pairing { subject: String, replicate: u32 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("at least 2 subjects are required, got {0}")]
    TooFewSubjects(usize),
    #[error("within-subject variance for method {0} not identifiable (no subject has 2 or more replicates)")]
    WithinNotIdentifiable(&'static str),
    #[error("variance divisor is zero (every subject has a single pair)")]
    ZeroDivisor,
    #[error("summaries do not match the {0} design")]
    DesignMismatch(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("sum of case weights is {0}, at least 2 required")]
    Degenerate(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("covariance of the linear statistic has rank 0; the hypothesis is untestable")]
    Untestable,
}

#[derive(Debug, Error)]
pub enum CoatError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot route subject: covariate '{0}' missing")]
    Routing(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
