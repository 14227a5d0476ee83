use std::path::PathBuf;

use lesion_core::{EnsembleError, FusionError, MetricsError, OpenSetError, TaxonomyError};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: sample `{sample_id}` appears more than once")]
    DuplicateId { path: PathBuf, sample_id: String },
    #[error("{path}:{line}: {source}")]
    VectorInvalid {
        path: PathBuf,
        line: u64,
        #[source]
        source: TaxonomyError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("sample `{sample_id}` has no row in {path}")]
    MissingSample { path: PathBuf, sample_id: String },
    #[error("{path}: sample `{sample_id}` is labelled as unknown, which is not allowed here")]
    UnexpectedUnknown { path: PathBuf, sample_id: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    OpenSet(#[from] OpenSetError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Stable machine-readable category, printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io_error",
            Self::HeaderMismatch { .. } => "header_mismatch",
            Self::Parse { .. } | Self::Json { .. } => "parse_error",
            Self::DuplicateId { .. } => "duplicate_id",
            Self::VectorInvalid { .. } => "vector_invalid",
            Self::MissingSample { .. } => "missing_sample",
            Self::UnexpectedUnknown { .. } => "unexpected_unknown",
            Self::Config(_) => "config_invalid",
            Self::Taxonomy(_) => "taxonomy_invalid",
            Self::Ensemble(_) => "ensemble_error",
            Self::OpenSet(_) => "openset_error",
            Self::Fusion(_) => "fusion_error",
            Self::Metrics(_) => "metrics_error",
        }
    }

    /// Process exit code; 2 is left to argument parsing errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 3,
            Self::HeaderMismatch { .. } => 4,
            Self::Parse { .. } | Self::Json { .. } => 5,
            Self::DuplicateId { .. } => 6,
            Self::VectorInvalid { .. } => 7,
            Self::MissingSample { .. } => 8,
            Self::Config(_) => 9,
            Self::Taxonomy(_) => 10,
            Self::Ensemble(_) => 11,
            Self::OpenSet(_) => 12,
            Self::Fusion(_) => 13,
            Self::Metrics(_) => 14,
            Self::UnexpectedUnknown { .. } => 15,
        }
    }
}
