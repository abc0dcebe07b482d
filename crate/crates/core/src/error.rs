use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("numeric failure: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("entropy undefined: field vanishes on every sample")]
    UndefinedEntropy,

    #[error("optimizer did not converge: constraint residual {residual:e}, best d_hat {best_d_hat}")]
    NotConverged {
        residual: f64,
        best_d_hat: f64,
        /// Breakpoints of the best iterate, `A₀ … A_K`.
        best_path: Vec<Vec<f64>>,
    },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numeric { message: msg.into(), residual }
    }
}
