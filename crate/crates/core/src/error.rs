use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed event or checkpoint file. `location` is a byte offset or a line number.
    #[error("{message} at {location}")]
    Format { message: String, location: Location },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Offset(u64),
    Line(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Offset(o) => write!(f, "offset {o}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

impl Error {
    pub(crate) fn format_at_offset(message: impl Into<String>, offset: u64) -> Self {
        Error::Format {
            message: message.into(),
            location: Location::Offset(offset),
        }
    }

    pub(crate) fn format_at_line(message: impl Into<String>, line: usize) -> Self {
        Error::Format {
            message: message.into(),
            location: Location::Line(line),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }
}
