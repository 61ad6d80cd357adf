use std::path::PathBuf;

use thiserror::Error;

use crate::admm::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("invalid weights for agent {agent}, field {field}: {reason}")]
    InvalidWeights {
        agent: usize,
        field: &'static str,
        reason: String,
    },

    #[error("invalid parameter {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("Z-step flow did not reach residual {tol:e} within {iterations} iterations (last residual {residual:e})")]
    FlowNotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("convergence condition violated and override not set\n{0}")]
    ConditionViolated(Box<ValidationReport>),

    #[error("problem too large for the dense oracle: dimension {dim} exceeds {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario field {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 2 validation failure,
    /// 4 I/O or parse error, 1 anything else. Non-convergence (3) is not an
    /// error and is decided by the caller.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConditionViolated(_) => 2,
            Error::Parse { .. }
            | Error::Config { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::UnknownScenario(_) => 4,
            _ => 1,
        }
    }
}
