use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    /// An enumeration or search exceeded its work budget.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The value of the policy is not finite (non-absorbing chain at gamma = 1, or
    /// a singular evaluation system).
    #[error("policy evaluation diverges: {0}")]
    Divergence(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    /// Every violation found while validating a configuration.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse(_) | Error::Argument(_) => 1,
            Error::Capacity(_) | Error::Divergence(_) => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            actual,
            context,
        })
    }
}
