use thiserror::Error;

/// Errors produced by the confidence-curve library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infinite quantile requested at probability {0}")]
    InfiniteQuantile(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no unique CD exists: confidence curve is not unimodal ({0})")]
    NotUnimodal(String),

    #[error("requested tail probability {requested} outside achievable range [{low}, {high}]")]
    OutsideSupport { requested: f64, low: f64, high: f64 },

    #[error("pivot is not monotone increasing on the grid near {0}")]
    NonMonotonePivot(f64),

    #[error("optimizer failed to converge (best objective {best_value}, at {best_point:?})")]
    NonConvergence {
        best_point: Vec<f64>,
        best_value: f64,
    },

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("model has no simulator")]
    MissingSimulator,

    #[error("method not applicable: {0}")]
    NotApplicable(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("quadrature did not converge (estimate {estimate}, error bound {bound})")]
    Quadrature { estimate: f64, bound: f64 },

    #[error("data validation failed: {0}")]
    Data(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
