use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("empty dataset: cannot fit a forest on zero samples")]
    EmptyDataset,

    #[error("operation `{op}` requires a {expected} forest")]
    WrongTask { op: &'static str, expected: &'static str },

    #[error("unknown class label {label} (forest has {n_classes} classes)")]
    UnknownClass { label: usize, n_classes: usize },

    #[error("query has {got} features, forest expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature index {index} out of range for {n_features} features")]
    FeatureOutOfRange { index: usize, n_features: usize },

    #[error("no sufficient explanation: {0}")]
    NotSufficient(String),

    #[error("empty cell: {0}")]
    EmptyCell(String),

    #[error("empty collection: {0}")]
    EmptyCollection(String),

    #[error("training data hash mismatch: model expects {expected}, data hashes to {actual}")]
    HashMismatch { expected: String, actual: String },

    #[error("unsupported model format: {0}")]
    ModelFormat(String),

    #[error("prediction changed under every perturbation draw after {attempts} attempts")]
    UnstablePrediction { attempts: usize },

    #[error("unsupported generator `{0}` (no closed-form conditional law)")]
    UnsupportedGenerator(String),

    #[error("{path}: row {row}, column `{column}`: {reason}")]
    Csv { path: PathBuf, row: usize, column: String, reason: String },

    #[error("missing column `{column}` in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    CsvParse(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI's structured errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidParam { .. } => "invalid_param",
            Error::EmptyDataset => "empty_dataset",
            Error::WrongTask { .. } => "wrong_task",
            Error::UnknownClass { .. } => "unknown_class",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::FeatureOutOfRange { .. } => "feature_out_of_range",
            Error::NotSufficient(_) => "not_sufficient",
            Error::EmptyCell(_) => "empty_cell",
            Error::EmptyCollection(_) => "empty_collection",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::ModelFormat(_) => "model_format",
            Error::UnstablePrediction { .. } => "unstable_prediction",
            Error::UnsupportedGenerator(_) => "unsupported_generator",
            Error::Csv { .. } => "csv_cell",
            Error::MissingColumn { .. } => "missing_column",
            Error::Io { .. } => "io",
            Error::CsvParse(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
