use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // table model
    #[error("name `{0}` already exists")]
    DuplicateName(String),
    #[error("length mismatch for `{what}`: expected {expected}, got {actual}")]
    LengthMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("unknown annotation `{0}`")]
    UnknownAnnotation(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),

    // container
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported container version {found} (supported: {supported})")]
    FormatVersionMismatch { found: u64, supported: u64 },
    #[error("checksum mismatch in `{file}`")]
    ChecksumMismatch { file: String },
    #[error("malformed container: {0}")]
    MalformedContainer(String),

    // ingest
    #[error("missing columns: {}", .0.join(", "))]
    MissingColumn(Vec<String>),
    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("input file is empty")]
    EmptyFile,
    #[error("inverted bounding box at row {row}")]
    InvertedBox { row: usize },
    #[error("feature sets differ: {}", .0.join(", "))]
    FeatureSetMismatch(Vec<String>),
    #[error("duplicate slide label `{0}`")]
    DuplicateSlideLabel(String),
    #[error("table {0} has no slide label")]
    MissingSlideLabel(usize),
    #[error("invalid column mapping: {0}")]
    InvalidMapping(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parquet error: {0}")]
    Parquet(String),

    // transforms
    #[error("cofactor must be positive, got {0}")]
    NonPositiveCofactor(f64),
    #[error("feature `{feature}` has fewer than 2 non-NaN values")]
    TooFewValues { feature: String },
    #[error("invalid quantile range ({q_low}, {q_high})")]
    InvalidQuantileRange { q_low: f64, q_high: f64 },
    #[error("batch `{batch}` has too few cells")]
    BatchTooSmall { batch: String },
    #[error("unknown marker `{0}`")]
    UnknownMarker(String),
    #[error("invalid phenotype rule: {0}")]
    InvalidRule(String),

    // clustering / neighbor search
    #[error("k = {k} too large for {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("input contains NaN at row {row}")]
    NaNInput { row: usize },
    #[error("graph must be undirected")]
    DirectedGraphError,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    // spatial statistics
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("radii must be a non-empty, strictly increasing list of positive values")]
    EmptyRadii,
    #[error("invalid region bounds: {0}")]
    InvalidBounds(String),
    #[error("at least two labels are required")]
    SingleLabel,
    #[error("neighbor graph has no edges")]
    EmptyGraph,
    #[error("bin edges must be strictly increasing, non-negative, with at least 2 entries")]
    BadBinEdges,

    // summaries
    #[error("column has no finite values")]
    EmptyColumn,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable error kind, used by the CLI and service.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateName(_) => "DuplicateName",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::UnknownLayer(_) => "UnknownLayer",
            Error::UnknownAnnotation(_) => "UnknownAnnotation",
            Error::InvalidTable(_) => "InvalidTable",
            Error::Io { .. } => "IoError",
            Error::FormatVersionMismatch { .. } => "FormatVersionMismatch",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::MalformedContainer(_) => "MalformedContainer",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumericFeature { .. } => "NonNumericFeature",
            Error::EmptyFile => "EmptyFile",
            Error::InvertedBox { .. } => "InvertedBox",
            Error::FeatureSetMismatch(_) => "FeatureSetMismatch",
            Error::DuplicateSlideLabel(_) => "DuplicateSlideLabel",
            Error::MissingSlideLabel(_) => "MissingSlideLabel",
            Error::InvalidMapping(_) => "InvalidMapping",
            Error::Csv(_) => "CsvError",
            Error::Parquet(_) => "ParquetError",
            Error::NonPositiveCofactor(_) => "NonPositiveCofactor",
            Error::TooFewValues { .. } => "TooFewValues",
            Error::InvalidQuantileRange { .. } => "InvalidQuantileRange",
            Error::BatchTooSmall { .. } => "BatchTooSmall",
            Error::UnknownMarker(_) => "UnknownMarker",
            Error::InvalidRule(_) => "InvalidRule",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::NaNInput { .. } => "NaNInput",
            Error::DirectedGraphError => "DirectedGraphError",
            Error::NonPositiveRadius(_) => "NonPositiveRadius",
            Error::UnknownLabel(_) => "UnknownLabel",
            Error::EmptyRadii => "EmptyRadii",
            Error::InvalidBounds(_) => "InvalidBounds",
            Error::SingleLabel => "SingleLabel",
            Error::EmptyGraph => "EmptyGraph",
            Error::BadBinEdges => "BadBinEdges",
            Error::EmptyColumn => "EmptyColumn",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::Json(_) => "JsonError",
        }
    }

    /// The offending input field, when the error can be pinned to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::UnknownColumn(name)
            | Error::UnknownLayer(name)
            | Error::UnknownAnnotation(name)
            | Error::UnknownMarker(name)
            | Error::UnknownLabel(name) => Some(name),
            Error::InvalidParameter { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
