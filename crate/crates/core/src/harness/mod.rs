//! Dataset loading, submission validation, evaluation, baselines, report
//! rendering and runtime measurement.

mod baseline;
mod dataset;
mod evaluate;
mod report;
mod submission;
mod timing;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImagingError;
use crate::metrics::MetricsError;
use crate::synthgen::GenerationError;

pub use baseline::{baseline_interpolate, write_baseline_submission, BaselineMode, OracleAux};
pub use dataset::{load_dataset, DatasetIndex, SequenceEntry};
pub use evaluate::{
    evaluate_submission, nonlinearity_for, EvaluationPlan, FrameSummary, MetricsReport,
    TierReport, TimestepReport, MASKED_FRACTION, REPORT_SCHEMA_VERSION, TRIM_FRACTIONS,
};
pub use report::{render_report, ReportFormat};
pub use submission::{
    validate_submission, Payload, Submission, SubmissionMeta, ValidationWarning,
};
pub use timing::{time_command, Job, TimingOptions, TimingResult, WorkerSpec};

/// Stable identifiers for submission problems, shared by the CLI, the
/// server and client-side pre-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    MissingFrame,
    BadDimensions,
    BadBitdepth,
    NoEnsembleFlag,
    ExtraFiles,
    MalformedFile,
    MalformedArchive,
    PayloadTooLarge,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::MissingFrame => "MISSING_FRAME",
            ErrorCode::BadDimensions => "BAD_DIMENSIONS",
            ErrorCode::BadBitdepth => "BAD_BITDEPTH",
            ErrorCode::NoEnsembleFlag => "NO_ENSEMBLE_FLAG",
            ErrorCode::ExtraFiles => "EXTRA_FILES",
            ErrorCode::MalformedFile => "MALFORMED_FILE",
            ErrorCode::MalformedArchive => "MALFORMED_ARCHIVE",
            ErrorCode::PayloadTooLarge => "PAYLOAD_TOO_LARGE",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{code}: {message}")]
    Validation { code: ErrorCode, message: String },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("worker error: {0}")]
    Worker(String),
    #[error("worker timed out after {seconds} s on job {job}")]
    WorkerTimeout { job: usize, seconds: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn validation(code: ErrorCode, message: impl Into<String>) -> Self {
        HarnessError::Validation {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            HarnessError::Validation { code, .. } => Some(*code),
            _ => None,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
