use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error at row {row}: {message}")]
    Integrity { row: usize, message: String },

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("size error: {0}")]
    Size(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("separation: {0}")]
    Separation(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } | Error::Schema(_) => "schema",
            Error::Integrity { .. } => "integrity",
            Error::Parse { .. } => "parse",
            Error::Size(_) => "size",
            Error::Dimension(_) => "dimension",
            Error::Separation(_) => "separation",
            Error::Singular(_) => "singular",
            Error::Usage(_) => "usage",
            Error::Domain(_) => "domain",
            Error::Unsupported(_) => "unsupported",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
