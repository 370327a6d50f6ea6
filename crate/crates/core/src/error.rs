use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of a model primitive.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A configuration value failed validation; `key` is the config path.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// An internal consistency check failed.
    #[error("logic error: {0}")]
    Logic(String),

    #[error(
        "fixed point did not converge after {iterations} iterations (residual {residual:e}){}",
        context.as_deref().map(|c| format!(" at {c}")).unwrap_or_default()
    )]
    Convergence {
        iterations: usize,
        residual: f64,
        context: Option<String>,
    },

    #[error("design matrix is rank deficient: {columns:?} collinear with preceding columns")]
    Rank { columns: Vec<String> },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
