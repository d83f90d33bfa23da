use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants follow the failure classes the CLI maps to exit codes:
/// configuration problems exit with 2, everything numeric with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The physical model is invalid (bad parameters, indefinite mass matrix).
    #[error("model error: {0}")]
    Model(String),

    /// A numerical procedure failed to converge or broke down.
    #[error("numeric error in {module}: {message}")]
    Numeric { module: &'static str, message: String },

    /// Configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// The optimal control problem could not be assembled.
    #[error("assembly error: {0}")]
    Assembly(String),
}

impl Error {
    pub(crate) fn numeric(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
