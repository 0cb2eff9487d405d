//! The platform edge: batch ingestion with validation, deduplication and
//! quarantine, plus the query, curation and table browsing API.

mod cursor;
mod error;
mod http;
mod query;
mod service;

pub use error::IngestError;
pub use http::{build_router, router, spawn_background, ServerConfig, ServerHandle};
pub use query::{EventFilter, EventsPage, QuarantinePage, RawFilter};
pub use service::{IngestService, QuarantineRecord, MAX_COMMIT_ATTEMPTS};

/// Table names owned by the service.
pub const EVENTS_TABLE: &str = "events";
pub const QUARANTINE_TABLE: &str = "quarantine";
pub const FLAGS_TABLE: &str = "curation_flags";
