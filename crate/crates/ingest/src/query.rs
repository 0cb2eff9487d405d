use std::str::FromStr;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use fieldledger_core::{EventKind, StoredEvent};

use crate::error::IngestError;
use crate::service::QuarantineRecord;

pub const MAX_PAGE: usize = 1000;
pub const DEFAULT_PAGE: usize = 100;

/// Query string as received; see [`RawFilter::parse`].
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawFilter {
    pub user_id: Option<String>,
    pub kind: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub online: Option<String>,
    pub limit: Option<String>,
    pub cursor: Option<String>,
}

/// Event predicates. Time bounds are inclusive and apply to `adjusted_ts`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventFilter {
    pub user_id: Option<String>,
    pub kind: Option<EventKind>,
    pub from_ms: Option<i64>,
    pub to_ms: Option<i64>,
    pub online: Option<bool>,
}

impl EventFilter {
    pub fn matches(&self, e: &StoredEvent) -> bool {
        let ts = e.adjusted_ms();
        self.user_id.as_deref().is_none_or(|u| e.envelope.user_id == u)
            && self.kind.is_none_or(|k| e.envelope.kind == k.as_str())
            && self.from_ms.is_none_or(|f| ts >= f)
            && self.to_ms.is_none_or(|t| ts <= t)
            && self.online.is_none_or(|o| e.envelope.connectivity.online == o)
    }
}

/// Accepts epoch milliseconds or an RFC 3339 instant.
fn parse_instant(name: &str, s: &str) -> Result<i64, IngestError> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.timestamp_millis())
        .map_err(|_| IngestError::BadFilter(format!("{name}: {s:?} is not epoch millis or RFC 3339")))
}

pub(crate) fn parse_limit(limit: Option<&str>) -> Result<usize, IngestError> {
    let Some(s) = limit else { return Ok(DEFAULT_PAGE) };
    match s.parse::<usize>() {
        Ok(n) if (1..=MAX_PAGE).contains(&n) => Ok(n),
        _ => Err(IngestError::BadFilter(format!("limit must be 1..={MAX_PAGE}, got {s:?}"))),
    }
}

impl RawFilter {
    pub fn parse(&self) -> Result<(EventFilter, usize), IngestError> {
        let kind = match &self.kind {
            Some(k) => Some(EventKind::from_str(k).map_err(|_| IngestError::BadFilter(format!("unknown kind {k:?}")))?),
            None => None,
        };
        let from_ms = self.from.as_deref().map(|s| parse_instant("from", s)).transpose()?;
        let to_ms = self.to.as_deref().map(|s| parse_instant("to", s)).transpose()?;
        if let (Some(f), Some(t)) = (from_ms, to_ms) {
            if f > t {
                return Err(IngestError::BadFilter("from is after to".into()));
            }
        }
        let online = match self.online.as_deref() {
            None => None,
            Some("true") => Some(true),
            Some("false") => Some(false),
            Some(o) => return Err(IngestError::BadFilter(format!("online must be true or false, got {o:?}"))),
        };
        let filter = EventFilter {
            user_id: self.user_id.clone(),
            kind,
            from_ms,
            to_ms,
            online,
        };
        Ok((filter, parse_limit(self.limit.as_deref())?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsPage {
    pub events: Vec<StoredEvent>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinePage {
    pub records: Vec<QuarantineRecord>,
    pub next_cursor: Option<String>,
}
