use std::path::PathBuf;

/// Errors surfaced by every layer of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension mismatches, invalid hyperparameters, incompatible environments.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called out of order or with an argument outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value appeared where a finite one is required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Metrics files that cannot be lined up step for step.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Prefixes the message of string-carrying variants with `ctx`.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Usage(m) => Error::Usage(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Alignment(m) => Error::Alignment(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
