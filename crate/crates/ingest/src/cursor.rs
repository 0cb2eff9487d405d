//! Opaque resumption tokens: the pinned table version plus the sort key of
//! the last row returned.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Cursor {
    #[serde(rename = "v")]
    pub version: u64,
    #[serde(rename = "t")]
    pub ts: i64,
    #[serde(rename = "k")]
    pub key: String,
}

impl Cursor {
    pub fn encode(&self) -> String {
        URL_SAFE_NO_PAD.encode(serde_json::to_vec(self).expect("cursor serializes"))
    }

    pub fn decode(token: &str) -> Result<Self, IngestError> {
        let bad = || IngestError::BadFilter(format!("invalid cursor {token:?}"));
        let bytes = URL_SAFE_NO_PAD.decode(token).map_err(|_| bad())?;
        serde_json::from_slice(&bytes).map_err(|_| bad())
    }
}
