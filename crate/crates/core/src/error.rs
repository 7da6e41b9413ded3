//! Error type shared by all pipeline stages.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors are grouped into coarse categories so the CLI can report a
/// machine-parseable category token alongside the message.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file (flow field, image, ground-truth document).
    #[error("format: {0}")]
    Format(String),

    /// Structurally invalid in-memory data (dimension or length mismatch).
    #[error("dimension: {0}")]
    Dimension(String),

    /// Index or integration range outside the available data.
    #[error("range: {0}")]
    Range(String),

    /// Invalid configuration or scenario parameters.
    #[error("config: {0}")]
    Config(String),

    /// A required input file is missing from a frame range.
    #[error("missing-input: {0}")]
    MissingInput(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category token, stable across releases, for scripted consumers.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Dimension(_) => "dimension",
            Error::Range(_) => "range",
            Error::Config(_) => "config",
            Error::MissingInput(_) => "missing-input",
        }
    }
}
