//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by dataset handling, training, evaluation, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file; always names the file and 1-based line.
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    /// Reference to an entity id that was never declared.
    #[error("dangling {kind} id {id}")]
    DanglingId { kind: &'static str, id: u64 },

    #[error("duplicate {kind} entry ({row}, {col})")]
    DuplicateEntry { kind: &'static str, row: u64, col: u64 },

    /// Structurally valid input with an out-of-contract value.
    #[error("invalid {what}: {why}")]
    Invalid { what: String, why: String },

    /// Configuration that cannot be satisfied (e.g. group larger than the user pool).
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("row {row}: only {eligible} eligible negatives, need {need}")]
    NotEnoughNegatives {
        row: u32,
        eligible: usize,
        need: usize,
    },

    /// Non-finite value encountered during numeric work.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
}

impl Error {
    pub fn invalid(what: impl Into<String>, why: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            why: why.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
