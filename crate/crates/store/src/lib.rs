//! Embedded append-only table storage with atomic commits and time travel.
//!
//! On-disk layout, one directory per table:
//!
//! ```text
//! <root>/<table>/_log/00000001.json     commit record for version 1
//! <root>/<table>/_log/00000002.json
//! <root>/<table>/<sha256-hex>.ndjson    immutable, content-addressed data file
//! ```
//!
//! A commit writes its rows to a data file named after the SHA-256 of its
//! bytes, then publishes `_log/<version>.json` by hard-linking a fully
//! written temp file into place. The link either creates the entry or fails
//! because another writer got there first, so it is both the atomic commit
//! point and the optimistic-concurrency arbiter. Readers only ever look at
//! published log entries and the files they name.

mod error;
mod record;
mod store;
mod verify;

pub use error::{Result, StoreError};
pub use record::{Commit, DataFileRef, RowSet};
pub use store::{CrashPoint, Store, StoreOptions, Version};
pub use verify::{CorruptFile, IntegrityReport};

/// Valid table names match `[a-z0-9_]{1,64}`.
pub fn is_valid_table_name(name: &str) -> bool {
    (1..=64).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}
