use thiserror::Error;

/// Errors produced by tensor algebra, reduction, search and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index:?} out of range for modes {modes:?}")]
    IndexOutOfRange { index: Vec<usize>, modes: Vec<usize> },

    #[error("rank {requested} exceeds the configured limit {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error("dense materialization of {entries} entries exceeds the guard of {limit}")]
    SizeGuard { entries: u128, limit: u128 },

    #[error("numerical failure in dimension {dimension}: {message}")]
    Numerical { dimension: usize, message: String },

    #[error("degenerate iterate at iteration {iteration}: {message}")]
    DegenerateIterate { iteration: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("expansion error: {0}")]
    Expansion(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::IndexOutOfRange { .. } => "range",
            Error::Capacity { .. } => "capacity",
            Error::SizeGuard { .. } => "size_guard",
            Error::Numerical { .. } => "numerical",
            Error::DegenerateIterate { .. } => "degenerate_iterate",
            Error::Domain(_) => "domain",
            Error::Expansion(_) => "expansion",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
