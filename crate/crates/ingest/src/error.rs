use fieldledger_store::StoreError;
use fieldledger_tracker::TrackerError;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed batch: {0}")]
    BatchMalformed(String),
    #[error("bad filter: {0}")]
    BadFilter(String),
    #[error("invalid flag: {0}")]
    InvalidFlag(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("corrupt stored row: {0}")]
    CorruptRow(String),
}

impl IngestError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::BatchMalformed(_) => "BATCH_MALFORMED",
            IngestError::BadFilter(_) => "BAD_FILTER",
            IngestError::InvalidFlag(_) => "INVALID_FLAG",
            IngestError::NotFound(_) => "NOT_FOUND",
            IngestError::StorageUnavailable(_) => "STORAGE_UNAVAILABLE",
            IngestError::Store(StoreError::UnknownTable(_) | StoreError::InvalidTableName(_)) => "NOT_FOUND",
            IngestError::Store(StoreError::UnknownVersion { .. }) => "NOT_FOUND",
            IngestError::Tracker(TrackerError::UnknownRun(_)) => "NOT_FOUND",
            IngestError::Store(_) | IngestError::Tracker(_) | IngestError::CorruptRow(_) => "INTERNAL",
        }
    }
}
