use thiserror::Error;

/// Errors raised by the simulation and limit solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error(
        "within-step iteration did not converge at t = {time} (residual {residual:e}) \
         after {refinements} grid refinements"
    )]
    NonConvergence {
        time: f64,
        residual: f64,
        refinements: u32,
    },

    #[error(
        "covariance block is numerically indefinite: minimum eigenvalue {min_eigenvalue:e} \
         is below the jitter budget {jitter:e}"
    )]
    IndefiniteCovariance { min_eigenvalue: f64, jitter: f64 },

    #[error("no covariance is defined between {0} and {1} for the {2} model")]
    UnknownDriverPair(String, String, String),

    #[error(
        "ensemble needs about {required_bytes} bytes of path storage, \
         over the budget of {budget_bytes} bytes"
    )]
    MemoryBudget {
        required_bytes: u64,
        budget_bytes: u64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
