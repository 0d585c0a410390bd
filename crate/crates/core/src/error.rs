use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter lies outside its domain.
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unknown {field} component `{value}`")]
    Vocabulary { field: &'static str, value: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("ODE integration produced a non-finite state at t={time}: {params}")]
    Integration { time: f64, params: String },

    #[error("graph has {components} connected components; Laplacian null space is degenerate")]
    Disconnected { components: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("truncated record in {} at byte offset {offset}", path.display())]
    Truncated { path: PathBuf, offset: u64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
