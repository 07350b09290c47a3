use std::path::PathBuf;

/// Errors produced by the fairgdt library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse value {value:?} at row {row}, column `{col}`")]
    ParseError {
        row: usize,
        col: String,
        value: String,
    },

    #[error("missing value at row {row}, column `{col}`")]
    MissingValue { row: usize, col: String },

    #[error("file has no header or no data rows")]
    EmptyFile,

    #[error("table has no rows")]
    EmptyTable,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sensitive group {0} is absent")]
    GroupMissing(u32),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("reference data has zero median nearest-neighbour distance")]
    DegenerateReference,

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
