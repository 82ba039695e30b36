use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the harness.
///
/// The variants split along the lines the CLI reports as distinct exit codes:
/// validation problems, backend failures, and data problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown cell or profile id `{0}`")]
    UnknownCell(String),

    #[error("cell `{0}` has no estimates")]
    EmptyCell(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("missing design cell {0}")]
    MissingDesignCell(String),

    #[error("mismatched target grids: {0}")]
    GridMismatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Backend(#[from] crate::agent::BackendError),

    #[error(transparent)]
    Parse(#[from] crate::inference::ParseError),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: file exists with different content")]
    Collision { path: PathBuf },

    #[error("plan digest {plan} does not match manifest digest {manifest}")]
    DigestMismatch { plan: String, manifest: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Toml {
        context: String,
        #[source]
        source: toml::de::Error,
    },

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

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Broad category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_)
            | Error::UnknownCell(_)
            | Error::Contract(_)
            | Error::DigestMismatch { .. }
            | Error::Toml { .. } => ErrorKind::Validation,
            Error::Backend(_) => ErrorKind::Backend,
            _ => ErrorKind::Data,
        }
    }

    /// Wraps the error message with extra context, keeping the category.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::DegenerateDesign(msg) => Error::DegenerateDesign(format!("{ctx}: {msg}")),
            Error::Validation(msg) => Error::Validation(format!("{ctx}: {msg}")),
            Error::Data(msg) => Error::Data(format!("{ctx}: {msg}")),
            Error::EmptyCell(cell) => Error::Data(format!("{ctx}: cell `{cell}` has no estimates")),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Backend,
    Data,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
