use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid system dimensions n={n}, m={m}: both must be at least 1")]
    InvalidDims { n: usize, m: usize },

    #[error("detector diverged: non-finite state at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("instance too large for exhaustive enumeration: N={n} exceeds {max}")]
    InstanceTooLarge { n: usize, max: usize },

    #[error("non-finite gradient for parameter {index} at generation {generation}")]
    NonFiniteGradient { generation: usize, index: usize },

    #[error("training diverged in generation {generation}: {source}")]
    TrainingDiverged {
        generation: usize,
        /// Flattened parameters from the last step that completed cleanly.
        last_stable: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
