//! Device timestamp handling.

use chrono::{DateTime, FixedOffset, SecondsFormat};
use serde::{Deserialize, Serialize};

/// A canonical UTC instant in milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpochMillis(pub i64);

impl EpochMillis {
    pub fn as_i64(self) -> i64 {
        self.0
    }

    pub fn to_datetime(self) -> Option<DateTime<chrono::Utc>> {
        DateTime::from_timestamp_millis(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed timestamp {input:?}: {reason}")]
pub struct MalformedTimestamp {
    pub input: String,
    pub reason: &'static str,
}

/// Parses an ISO-8601 instant that carries an explicit offset (`Z` or `±hh:mm`).
pub fn parse_client_ts(client_ts: &str) -> Result<DateTime<FixedOffset>, MalformedTimestamp> {
    DateTime::parse_from_rfc3339(client_ts).map_err(|_| MalformedTimestamp {
        input: client_ts.to_owned(),
        reason: "expected ISO-8601 date-time with an explicit UTC offset",
    })
}

/// Converts a device timestamp to UTC epoch milliseconds and applies a skew
/// correction.
pub fn normalize_timestamp(client_ts: &str, skew_ms: i64) -> Result<EpochMillis, MalformedTimestamp> {
    let parsed = parse_client_ts(client_ts)?;
    Ok(EpochMillis(parsed.timestamp_millis() + skew_ms))
}

/// Renders a device instant the way the SDK writes `client_ts`: millisecond
/// precision, offset preserved, `Z` for UTC.
pub fn format_client_ts(ts: &DateTime<FixedOffset>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}
