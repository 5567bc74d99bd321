use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value rejected at row {row}, col {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("{path}:{line}: column {col}: {msg}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("row count mismatch: {0}")]
    RowCountMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite {what} in {location}")]
    NonFinite { what: String, location: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
