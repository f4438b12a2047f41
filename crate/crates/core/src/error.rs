use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("document is empty")]
    EmptyDocument,

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown rubric dimension `{0}`")]
    UnknownDimension(String),

    #[error("report `{report_id}` has no prediction for dimension `{dimension_id}`")]
    IncompleteReport { report_id: String, dimension_id: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("mode mismatch: checkpoint is `{checkpoint}`, requested `{requested}`")]
    ModeMismatch { checkpoint: String, requested: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Path { .. } | Error::Csv(_) | Error::ProviderUnavailable(_)
        )
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}
