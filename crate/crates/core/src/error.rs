use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("empty pool: circuit '{circuit}' context '{context}' has zero repetitions")]
    EmptyPool { circuit: String, context: String },

    #[error("unknown context '{context}' for circuit '{circuit}'")]
    MissingContext { circuit: String, context: String },

    #[error("unregistered gate label '{0}'")]
    UnknownGate(String),

    #[error("parse error in '{input}': {message}")]
    Parse { input: String, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// True for failures inside the numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
