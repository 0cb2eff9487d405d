use std::io;
use std::path::PathBuf;

use crate::store::CrashPoint;

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid table name {0:?}")]
    InvalidTableName(String),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("version conflict on {table}: expected latest {expected}, found {actual}")]
    VersionConflict {
        table: String,
        expected: u64,
        actual: u64,
    },
    #[error("unknown version {requested} of {table} (latest is {latest})")]
    UnknownVersion {
        table: String,
        requested: u64,
        latest: u64,
    },
    #[error("integrity error in {}: {reason}", path.display())]
    IntegrityError { path: PathBuf, reason: String },
    #[error("commit must contain at least one row")]
    EmptyCommit,
    #[error("injected crash at {0:?}")]
    InjectedCrash(CrashPoint),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed document in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> StoreError {
        let path = path.into();
        move |source| StoreError::Io { path, source }
    }
}
