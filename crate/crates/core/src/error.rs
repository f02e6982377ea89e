//! Error type shared by every stage of the pipeline.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CebError>;

#[derive(Debug, Error)]
pub enum CebError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no seeds")]
    NoSeeds,

    #[error("structural error: {0}")]
    Structure(String),

    /// A graph component is too large to enumerate under the configured caps.
    #[error(
        "capacity exceeded: component containing region {first_region} has {nodes} nodes / {what}"
    )]
    Capacity {
        first_region: u32,
        nodes: usize,
        what: String,
    },

    #[error("solver node budget of {0} exhausted")]
    SolverBudget(u64),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("missing external score for signature id(s): {0}")]
    MissingScore(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CebError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CebError::Io {
            path: path.into(),
            source,
        }
    }
}
