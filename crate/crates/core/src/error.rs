use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training set has a single class; need both labels")]
    SingleClass,

    #[error("class list mismatch: {0}")]
    ClassMismatch(String),

    #[error("unknown label `{label}`")]
    UnknownLabel { label: String },

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Toml(String),

    #[error("corrupt encoded payload: {0}")]
    Decode(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, one per failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::InvalidConfig { .. } => "E_CONFIG",
            Error::NotSymmetric(_) => "E_NOT_SYMMETRIC",
            Error::Empty(_) => "E_EMPTY",
            Error::SingleClass => "E_SINGLE_CLASS",
            Error::ClassMismatch(_) => "E_CLASS_MISMATCH",
            Error::UnknownLabel { .. } => "E_UNKNOWN_LABEL",
            Error::Manifest { .. } => "E_MANIFEST",
            Error::Image { .. } => "E_IMAGE",
            Error::FormatVersion { .. } => "E_FORMAT_VERSION",
            Error::MissingFile(_) => "E_MISSING_FILE",
            Error::Io { .. } => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Toml(_) => "E_CONFIG_PARSE",
            Error::Decode(_) => "E_DECODE",
        }
    }

    /// Process exit status for the CLI; distinct per code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape { .. } => 10,
            Error::Dimension { .. } => 11,
            Error::InvalidConfig { .. } => 12,
            Error::NotSymmetric(_) => 13,
            Error::Empty(_) => 14,
            Error::SingleClass => 15,
            Error::ClassMismatch(_) => 16,
            Error::UnknownLabel { .. } => 17,
            Error::Manifest { .. } => 18,
            Error::Image { .. } => 19,
            Error::FormatVersion { .. } => 20,
            Error::MissingFile(_) => 21,
            Error::Io { .. } => 22,
            Error::Json(_) => 23,
            Error::Toml(_) => 24,
            Error::Decode(_) => 25,
        }
    }
}
