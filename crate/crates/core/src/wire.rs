//! JSON bodies exchanged between the SDK and the ingestion edge.

use serde::{Deserialize, Serialize};

use crate::envelope::EventEnvelope;
use crate::validate::FieldError;

/// One upload from a device. The server decodes `events` as raw JSON values
/// (`BatchRequest<serde_json::Value>`) so that malformed records can be
/// reported individually instead of failing the whole body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRequest<E = EventEnvelope> {
    pub batch_id: String,
    pub app_id: String,
    pub device_id: String,
    pub sent_ts: String,
    pub events: Vec<E>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStatus {
    Accepted,
    Duplicate,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventResult {
    pub event_id: String,
    pub status: EventStatus,
    #[serde(default)]
    pub errors: Vec<FieldError>,
}

/// Per-event verdicts, one per request event, in request order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchResponse {
    pub results: Vec<EventResult>,
}

impl BatchResponse {
    pub fn count(&self, status: EventStatus) -> usize {
        self.results.iter().filter(|r| r.status == status).count()
    }
}

/// Error body returned with non-200 statuses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

/// A row of the `events` table: the accepted envelope (with `adjusted_ts`
/// set) plus the submitting app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub app_id: String,
    #[serde(flatten)]
    pub envelope: EventEnvelope,
}

impl StoredEvent {
    /// Canonical instant used for ordering and day bucketing.
    pub fn adjusted_ms(&self) -> i64 {
        self.envelope.adjusted_ts.map(|t| t.0).unwrap_or(i64::MIN)
    }
}
