//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A data row has the wrong number of fields.
    #[error("format error at row {row}: {msg}")]
    Format { row: usize, msg: String },

    /// A token could not be parsed as a number or label.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// A dataset with no instances.
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Invalid configuration (hyperparameters, motif placement, ...).
    #[error("config error: {0}")]
    Config(String),

    /// A batch operation was called with no instances.
    #[error("empty batch")]
    EmptyBatch,

    /// NaN or infinity appeared during numerical work.
    #[error("numerical error in {block}: {msg}")]
    Numerical { block: String, msg: String },

    /// A training instance has no class label.
    #[error("instance {index} has no label")]
    MissingLabel { index: usize },

    /// The external model process failed.
    #[error("adapter error: {msg}{}", if .stderr.is_empty() { String::new() } else { format!(" (stderr: {})", .stderr.trim()) })]
    Adapter { msg: String, stderr: String },

    /// The external model replied with something other than the wire protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The external model did not reply in time.
    #[error("adapter timed out after {0:?}")]
    AdapterTimeout(std::time::Duration),

    /// Array lengths or trained shapes do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// Ground truth is constant, so precision/recall are undefined.
    #[error("degenerate ground truth: needs at least one salient and one non-salient step")]
    DegenerateGroundTruth,

    /// An artifact file carries an unsupported version tag.
    #[error("version error in {file}: found version {found}, expected {expected}")]
    Version {
        file: String,
        found: u32,
        expected: u32,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
