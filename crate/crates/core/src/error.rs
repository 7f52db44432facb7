use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: column {column} is identically zero")]
    ZeroColumn { column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("invalid knockoff s vector: 2diag(s) - diag(s) inv(Sigma) diag(s) has eigenvalue {min_eigenvalue:e}")]
    InvalidS { min_eigenvalue: f64 },

    #[error("singular design: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (last max change {max_change:e})")]
    Convergence { iterations: usize, max_change: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("pairing error: statistic needs an even number of coordinates, got {0}")]
    Pairing(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by bad input or configuration rather than
    /// by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Dimension(_)
        )
    }
}
