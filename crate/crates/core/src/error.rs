use dynres_conic::{Status, SupportError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver returned {status:?} for {context}")]
    Solver { status: Status, context: String },
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("schema error at `{field}`: {msg}")]
    Schema { field: String, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn solver(status: Status, context: impl Into<String>) -> Self {
        Error::Solver { status, context: context.into() }
    }

    pub(crate) fn schema(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema { field: field.into(), msg: msg.into() }
    }
}
