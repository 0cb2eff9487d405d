//! Shared vocabulary of the fieldledger platform.
//!
//! Every event that moves through the system, from the in-app SDK queue to
//! the ingestion edge and into the versioned store, is an [`EventEnvelope`].
//! This crate owns the envelope, the built-in schema [`Catalog`], the
//! timestamp and location normalizers, canonical serialization and the
//! per-record validator.

pub mod canonical;
pub mod catalog;
pub mod curation;
pub mod envelope;
pub mod geo;
pub mod ids;
pub mod time;
pub mod validate;
pub mod wire;

pub use canonical::{canonical_bytes, canonical_serialize, sha256_hex};
pub use catalog::{Catalog, CatalogError, FieldSpec, FieldType, SchemaDefinition};
pub use curation::{CurationFlag, Verdict};
pub use envelope::{ConnectivityInfo, EventEnvelope, EventKind, NetworkType, Payload};
pub use geo::{normalize_location, GeoPoint};
pub use ids::{is_valid_ulid, UlidGenerator};
pub use time::{format_client_ts, normalize_timestamp, EpochMillis};
pub use validate::{
    validate_event, validate_raw, ErrorCode, FieldError, ValidationOutcome, ValidationStatus,
};
pub use wire::{ApiError, BatchRequest, BatchResponse, EventResult, EventStatus, StoredEvent};
