use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("point at radius {radius} is not on the unit sphere")]
    NotOnBoundary { radius: f64 },

    #[error("point at radius {radius} lies inside the obstacle")]
    InsideObstacle { radius: f64 },

    #[error("degenerate increment: free move landed exactly on the obstacle centre")]
    DegenerateIncrement,

    #[error("step budget of {0} moves exhausted")]
    BudgetExceeded(u64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular pair: endpoint coincides with start point")]
    SingularPair,

    #[error("quadrature did not reach tolerance {tol:e} within {evaluations} evaluations (error estimate {estimate:e})")]
    QuadratureBudget {
        tol: f64,
        evaluations: u64,
        estimate: f64,
    },

    #[error("trace was recorded without per-step boundary flags")]
    MissingBoundaryFlags,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
