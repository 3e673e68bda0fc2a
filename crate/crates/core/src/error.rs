use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the training and diagnostics engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stale activation trace: network changed since forward (trace v{trace}, network v{network})")]
    StaleTrace { trace: u64, network: u64 },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("training diverged at epoch {epoch}, step {step}: non-finite {what}")]
    Diverged {
        epoch: usize,
        step: usize,
        what: &'static str,
        /// Checkpoint of the last finite model state.
        checkpoint: Vec<u8>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("csv {path}: row {row}, column {column}: {message}")]
    CsvCell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv {path}: {message}")]
    CsvSchema { path: PathBuf, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic: expected \"NCLF\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("malformed: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
