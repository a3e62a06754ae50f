use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped so the command-line front end can map them onto
/// its exit-code taxonomy without inspecting messages.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, axes or lengths that do not fit together.
    #[error("shape error: {0}")]
    Shape(String),

    /// A structurally invalid algebra (wrong table size, non-finite entry).
    #[error("invalid algebra: {0}")]
    Algebra(String),

    /// Bad configuration: unknown names, inconsistent hyperparameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A configuration or data file that does not parse.
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A checkpoint or tensor file that is truncated or otherwise damaged.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// A checkpoint written by an incompatible format version.
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// A NaN or infinity showed up where a finite number is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
