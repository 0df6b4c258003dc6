use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state has {photons} photons, truncation is {limit}")]
    TruncationExceeded { photons: usize, limit: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("no extrema found in scan")]
    NoExtrema,

    #[error("phase grid too coarse: {points_per_period:.1} points per fringe period, need at least {required}")]
    GridTooCoarse { points_per_period: f64, required: usize },

    #[error("quadrature did not converge (estimated error {estimate:.3e})")]
    QuadratureFailed { estimate: f64 },

    #[error("scan does not span the fringe extrema")]
    ExtremaNotSpanned,

    #[error("non-monotone branch ambiguity near theta = {theta}")]
    BranchAmbiguity { theta: f64 },

    #[error("degenerate design matrix")]
    DegenerateDesign,

    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("singular Jacobian; mutually dependent parameters: {}", .params.join(", "))]
    SingularJacobian { params: Vec<String> },

    #[error("stage `{stage}` requires results from `{requires}`")]
    StageDependency { stage: String, requires: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
