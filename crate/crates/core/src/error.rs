use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported Bessel order {0} (supported: 1/2, 1, 3/2, 2, 5/2, 3)")]
    UnsupportedOrder(f64),

    #[error("argument {0} outside the supported range")]
    OutOfRange(f64),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("search grid too large: {pairs} center pairs exceed the budget of {budget}")]
    BudgetExceeded { pairs: u64, budget: u64 },

    #[error("all test-point searches failed (best residual {best_residual:e})")]
    TestPointSearch { best_residual: f64 },

    #[error("mass split quota unreachable: {0}")]
    QuotaUnreachable(String),

    #[error("not enough qualifying rows: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Bracketing(_)
                | Error::NoConvergence { .. }
                | Error::TestPointSearch { .. }
                | Error::QuotaUnreachable(_)
                | Error::InsufficientData(_)
        )
    }
}
