use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `line`/`column` come from the JSON parser.
    #[error("parse error in {what} at line {line}, column {column}: {message}")]
    Parse {
        what: String,
        line: usize,
        column: usize,
        message: String,
    },

    /// A domain invariant was violated; `rule` names it.
    #[error("invariant violated ({rule}): {detail}")]
    Invariant { rule: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{column}` on table `{table}`")]
    UnknownColumn { table: String, column: String },

    #[error("action {index} is infeasible in the current state")]
    InfeasibleAction { index: usize },

    #[error("episode is already done")]
    EpisodeDone,

    /// Selector produced no selectable dimension: every candidate is infeasible.
    #[error("empty mask: no feasible action dimension")]
    EmptyMask,

    #[error("pool has {size} candidates, exhaustive search is limited to {limit}")]
    PoolTooLarge { size: usize, limit: usize },

    #[error("numerical divergence in episode {episode}: {detail}")]
    Divergence { episode: usize, detail: String },

    #[error("external cost source failed to start: {0}")]
    Spawn(String),

    #[error("external cost source protocol violation: {0}")]
    Protocol(String),

    #[error("external cost source timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            what: what.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn invariant(rule: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            rule,
            detail: detail.into(),
        }
    }
}
