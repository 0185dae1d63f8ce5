use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed model or matrix (shape, probability or reward range violations).
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// A caller passed an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The confusion matrix is too close to singular for a surrogate to exist.
    #[error("confusion matrix is singular or ill-conditioned (det = {det})")]
    SingularNoise { det: f64 },
    /// No observations are available yet at a state-action pair.
    #[error("no observations recorded at state {state}, action {action}")]
    NotReady { state: usize, action: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("iteration did not converge (residual {residual})")]
    NotConverged { residual: f64 },
}

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn invalid_model(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}
