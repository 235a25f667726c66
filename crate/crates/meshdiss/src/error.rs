//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad ranges, probabilities, missing seed, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Network file violates the on-disk schema. `path` is the JSON field path.
    #[error("schema error at {path}: {msg}")]
    Schema { path: String, msg: String },

    /// A precondition of an operation does not hold (e.g. As. 1, gamma_bar - delta <= 0).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Matrix dimensions do not compose.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An LMI stage of the pipeline is infeasible. Carries stage / group / node
    /// identifiers and a recommendation where one exists.
    #[error("infeasible at {stage}: {detail}")]
    Infeasible { stage: String, detail: String },

    /// The solver failed numerically (no feasibility verdict).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Integrator produced a non-finite state.
    #[error("integration error at t = {t}: {msg}")]
    Integration { t: f64, msg: String },

    /// Domain error in a metric (e.g. amplified transmission passed to J_M).
    #[error("domain error: {0}")]
    Domain(String),

    /// SMS coefficients cannot be formed from the certificate.
    #[error("SMS inapplicable: {0}")]
    SmsInapplicable(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. } => 2,
            Error::Config(_) | Error::Schema { .. } | Error::Precondition(_) => 3,
            Error::Io(_) | Error::Json(_) => 4,
            _ => 1,
        }
    }
}
