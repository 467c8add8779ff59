//! Episode manifests, shards, corpus statistics and review sampling.

pub mod check;
pub mod manifest;
pub mod sample;
pub mod shard;
pub mod stats;

use thiserror::Error;

use crate::episode::ValidationReport;

pub use check::{check_manifest, CheckReport};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use sample::{sample_for_review, BatchItem, ReviewBatch};
pub use shard::{pack, PackSummary, ShardInfo, SHARD_CAPACITY};
pub use stats::{compute_stats, StatsReport, Totals};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// 1-based line number of a line that does not hold an episode.
    #[error("manifest line {line} is corrupt: {detail}")]
    CorruptLine { line: usize, detail: String },
    #[error("episode id `{0}` already present")]
    DuplicateId(String),
    #[error("episode `{0}` not found")]
    NotFound(String),
    #[error("episode `{id}` fails validation: {report:?}")]
    Invalid { id: String, report: ValidationReport },
    #[error("sample of {requested} requested but only {available} episodes exist")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::Io(_) => "IO",
            DatasetError::CorruptLine { .. } => "CORRUPT_LINE",
            DatasetError::DuplicateId(_) => "DUPLICATE_ID",
            DatasetError::NotFound(_) => "NOT_FOUND",
            DatasetError::Invalid { .. } => "INVALID_EPISODE",
            DatasetError::SampleTooLarge { .. } => "SAMPLE_TOO_LARGE",
            DatasetError::EmptySample => "EMPTY_SAMPLE",
        }
    }

    /// Whether the error means the stored data itself is damaged.
    pub fn is_corruption(&self) -> bool {
        matches!(self, DatasetError::Io(_) | DatasetError::CorruptLine { .. } | DatasetError::DuplicateId(_))
    }
}
