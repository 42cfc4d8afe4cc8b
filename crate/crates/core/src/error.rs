use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the core pipeline.
///
/// Ingestion errors carry the 1-based manifest line they were found on so
/// that a bad record can be located without re-reading the file.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("line {line}: duplicate sample_id {sample_id:?}")]
    DuplicateSampleId { line: usize, sample_id: String },

    #[error("line {line}: field {field:?} has {actual} values, expected {expected}")]
    Dimension {
        line: usize,
        field: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("line {line}: field {field:?} contains a non-finite value")]
    NonFinite { line: usize, field: &'static str },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("sample {sample_id:?} lacks the {modality} modality required by the mask")]
    MissingModality { sample_id: String, modality: &'static str },

    #[error("class {label} has no samples")]
    EmptyClass { label: u8 },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("minority class has {count} samples, at least 2 are required")]
    TooFewMinority { count: usize },

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    FeatureDim { expected: usize, actual: usize },

    #[error("unsupported model format_version {found} (expected {expected})")]
    ModelVersion { found: i64, expected: i64 },

    #[error("corrupted model file: {0}")]
    CorruptModel(String),

    #[error("report encoding failed: {0}")]
    Report(String),
}

impl Error {
    pub fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
