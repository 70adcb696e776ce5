use alloc::string::String;

/// Errors produced by the simulation engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical blowup at t = {t} (h = {h})")]
    NumericalBlowup { t: f64, h: f64 },

    #[error("degenerate measurement record at t = {t}: normalizer {normalizer}")]
    DegenerateRecord { t: f64, normalizer: f64 },

    #[error("integration failure: {0}")]
    IntegrationFailure(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
