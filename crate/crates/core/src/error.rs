use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A factor, value or label that does not fit the attached schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Structurally valid input whose contents violate a precondition.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed input file content at a known line (1-based).
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Labels that carry no impurity to explain (a constant factor).
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Data(_) => "data",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::Numerical(_) => "numerical",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
