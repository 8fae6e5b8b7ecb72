use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: row {row}, column `{column}`: {message}")]
    Parse {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation failed with {hard} hard violation(s): {first}")]
    Validation { hard: usize, first: String },

    /// A caller broke an operation's precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit failed: {0}")]
    Fit(String),

    /// The likelihood refinement did not converge; `css` holds the best
    /// conditional-sum-of-squares parameters (ar, ma, mean).
    #[error("ARIMA likelihood refinement did not converge")]
    NonConvergence { css: Vec<f64> },

    #[error("stage error: {0}")]
    Stage(String),

    #[error("missing prerequisite artifact: {}", .0.display())]
    Prerequisite(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
