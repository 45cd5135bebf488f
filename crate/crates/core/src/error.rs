use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: u64, col: u32 },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt store: {0}")]
    CorruptStore(String),

    #[error("id {id} not found")]
    NotFound { id: u64 },

    #[error("invalid feature subset: {0}")]
    Subset(String),

    #[error("cannot sample: {0}")]
    Sample(String),

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("training failed: {0}")]
    Train(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable code, used in service error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } | Error::Ingest(_) => "ingest_error",
            Error::Format(_) => "format_error",
            Error::CorruptStore(_) => "corrupt_store",
            Error::NotFound { .. } => "not_found",
            Error::Subset(_) => "subset_error",
            Error::Sample(_) => "sample_error",
            Error::IndexMismatch(_) => "index_mismatch",
            Error::Catalog(_) => "catalog_error",
            Error::Train(_) => "train_error",
            Error::Model(_) => "model_error",
            Error::InvalidRequest(_) => "invalid_request",
            Error::Io(_) => "io_error",
        }
    }
}
