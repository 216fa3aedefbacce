use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mixture density vanishes at observation y = {y}")]
    DegeneratePoint { y: f64 },

    #[error("component {label} receives no responsibility mass")]
    DegenerateComponent { label: usize },

    #[error("sample must contain at least {required} observations, got {got}")]
    SampleTooSmall { required: usize, got: usize },

    #[error("sample has zero spread")]
    DegenerateSample,

    #[error("integration failed on [{lo}, {hi}] after {subdivisions} subdivisions (last estimate {last_estimate}): {reason}")]
    Integration {
        lo: f64,
        hi: f64,
        subdivisions: usize,
        last_estimate: f64,
        reason: String,
    },

    #[error("objective is not finite at {point:?}: {detail}")]
    NonFiniteObjective { point: Vec<f64>, detail: String },

    #[error("proximal step {iteration} failed: {source}")]
    Step {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no admissible initial point after {draws} draws")]
    Initialization { draws: usize },

    #[error("invalid plan: {field}: {reason}")]
    Plan { field: String, reason: String },

    #[error("every replication failed for estimator {estimator}")]
    AllReplicationsFailed { estimator: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn plan(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Plan {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
