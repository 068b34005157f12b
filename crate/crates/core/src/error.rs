use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A model could not be fitted to the supplied data.
    #[error("fit error: {0}")]
    Fit(String),
    /// Group distributions could not be assembled.
    #[error("build error: {0}")]
    Build(String),
    /// A linear system was singular or not positive definite.
    #[error("singular system at pivot {0}")]
    Singular(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn fit(msg: impl Into<String>) -> Error {
    Error::Fit(msg.into())
}
