use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    User,
    Content,
}

pub const USER_METRICS: [&str; 7] = [
    "event_count",
    "session_count",
    "active_minutes",
    "content_views",
    "content_completions",
    "purchases",
    "offline_event_fraction",
];

pub const CONTENT_METRICS: [&str; 3] = ["views", "completions", "unique_viewers"];

pub const KPIS: [&str; 5] = [
    "dau",
    "total_events",
    "total_purchases",
    "avg_session_minutes",
    "offline_fraction",
];

/// Per-subject, per-day time-series value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub subject_kind: SubjectKind,
    pub subject_id: String,
    /// UTC calendar day, `YYYY-MM-DD`.
    pub date: String,
    pub metric: String,
    pub value: f64,
}

/// Cross-subject daily aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRow {
    pub date: String,
    pub kpi: String,
    pub value: f64,
}

/// Dimensional attribute of one subject. Instants are epoch milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitRow {
    pub subject_kind: SubjectKind,
    pub subject_id: String,
    #[serde(rename = "trait")]
    pub trait_name: String,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionType {
    View,
    Complete,
    Purchase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub user_id: String,
    pub content_id: String,
    pub adjusted_ts: i64,
    pub interaction_type: InteractionType,
    pub event_id: String,
}

/// UTC calendar day of an epoch-millisecond instant.
pub fn date_of(epoch_ms: i64) -> NaiveDate {
    DateTime::from_timestamp_millis(epoch_ms)
        .map(|t| t.date_naive())
        .unwrap_or(NaiveDate::MIN)
}
