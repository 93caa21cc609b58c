use thiserror::Error;

/// Failure classes shared by every module.
///
/// The variants map one-to-one onto the command-line exit codes, so callers
/// can route an error without inspecting its message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Input data is malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),
    /// A quantity left the domain where the formula is defined.
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    /// An iterative procedure hit its refinement or truncation cap.
    #[error("convergence failure: {0}")]
    Convergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
