use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("row {row}: label value `{value}` has no entry in label_remap")]
    UnmappableLabel { row: usize, value: String },

    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },

    #[error("column `{column}`: unseen category `{category}`")]
    UnseenCategory { column: String, category: String },

    #[error("protected column `{column}` must take exactly two values, found {found:?}")]
    ProtectedNotBinary { column: String, found: Vec<String> },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("cannot fit reweighing: empty cell (s={s}, y={y})")]
    EmptyCell { s: u8, y: u8 },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("LFR diverged at iteration {iteration} (step size {step})")]
    Diverged { iteration: usize, step: f64 },

    #[error("LFR validation failed: transformed labels contain only the value {label}")]
    DegenerateLabels { label: u8 },

    #[error("OP domain has {cells} cells, above the limit of {limit}")]
    DomainTooLarge { cells: usize, limit: usize },

    #[error("OP constraints infeasible: {binding}")]
    Infeasible { binding: String },

    #[error("row {row}: cell not present in the fitted domain")]
    UnseenCell { row: usize },

    #[error("group {0} absent")]
    MissingGroup(u8),

    #[error("ensemble member {index} ({name}) failed: {source}")]
    Member {
        index: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("cell {cell} failed ({kind}): {message}")]
    Cell { cell: String, kind: String, message: String },

    #[error("metric mismatch: `{0}` vs `{1}`")]
    MetricMismatch(String, String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error summary.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::UnknownColumn(_) => "unknown_column",
            Error::UnmappableLabel { .. } => "unmappable_label",
            Error::NonNumeric { .. } => "non_numeric",
            Error::MissingValue { .. } => "missing_value",
            Error::UnseenCategory { .. } => "unseen_category",
            Error::ProtectedNotBinary { .. } => "protected_not_binary",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::EmptyCell { .. } => "empty_cell",
            Error::SingleClass => "single_class",
            Error::Diverged { .. } => "diverged",
            Error::DegenerateLabels { .. } => "degenerate_labels",
            Error::DomainTooLarge { .. } => "domain_too_large",
            Error::Infeasible { .. } => "infeasible",
            Error::UnseenCell { .. } => "unseen_cell",
            Error::MissingGroup(_) => "missing_group",
            Error::Member { .. } => "member",
            Error::Cell { .. } => "cell",
            Error::MetricMismatch(..) => "metric_mismatch",
            Error::Config(_) => "config",
            Error::Serde(_) => "serde",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
