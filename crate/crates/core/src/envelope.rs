//! The event envelope and its small value types.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;
use crate::time::EpochMillis;

/// Kind-specific fields of an event, keyed by field name.
pub type Payload = BTreeMap<String, serde_json::Value>;

/// Built-in behavioral labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PageView,
    ContentView,
    ContentComplete,
    Purchase,
    Search,
    SessionStart,
    SessionEnd,
    Custom,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::PageView,
        EventKind::ContentView,
        EventKind::ContentComplete,
        EventKind::Purchase,
        EventKind::Search,
        EventKind::SessionStart,
        EventKind::SessionEnd,
        EventKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PageView => "page_view",
            EventKind::ContentView => "content_view",
            EventKind::ContentComplete => "content_complete",
            EventKind::Purchase => "purchase",
            EventKind::Search => "search",
            EventKind::SessionStart => "session_start",
            EventKind::SessionEnd => "session_end",
            EventKind::Custom => "custom",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown event kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for EventKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkType {
    Wifi,
    Cellular,
    Offline,
    Unknown,
}

impl NetworkType {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkType::Wifi => "wifi",
            NetworkType::Cellular => "cellular",
            NetworkType::Offline => "offline",
            NetworkType::Unknown => "unknown",
        }
    }
}

/// Connectivity snapshot taken when the event was generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityInfo {
    pub online: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_kbps: Option<f64>,
    pub network_type: NetworkType,
}

impl ConnectivityInfo {
    pub fn offline() -> Self {
        Self {
            online: false,
            speed_kbps: None,
            network_type: NetworkType::Offline,
        }
    }

    pub fn online(network_type: NetworkType, speed_kbps: Option<f64>) -> Self {
        Self {
            online: true,
            speed_kbps,
            network_type,
        }
    }

    /// `online = false` requires `network_type = offline` and no speed; speeds
    /// are finite and non-negative.
    pub fn is_consistent(&self) -> bool {
        let speed_ok = self.speed_kbps.is_none_or(|s| s.is_finite() && s >= 0.0);
        let offline_ok =
            self.online || (self.network_type == NetworkType::Offline && self.speed_kbps.is_none());
        speed_ok && offline_ok
    }
}

/// One behavioral log record.
///
/// `kind` is kept as the raw label so that envelopes carrying labels outside
/// the catalog can still be represented and reported on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub event_id: String,
    pub user_id: String,
    pub kind: String,
    pub client_ts: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_ts: Option<EpochMillis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoPoint>,
    pub connectivity: ConnectivityInfo,
    pub sdk_version: String,
    pub schema_version: u32,
    pub payload: Payload,
}

impl EventEnvelope {
    pub fn event_kind(&self) -> Option<EventKind> {
        self.kind.parse().ok()
    }
}
