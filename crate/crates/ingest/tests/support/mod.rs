#![allow(dead_code)]

use std::sync::Arc;

use fieldledger_core::{Catalog, UlidGenerator};
use fieldledger_ingest::IngestService;
use fieldledger_store::Store;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// 2022-03-01T10:00:00Z
pub const T0: i64 = 1_646_128_800_000;

pub struct Ids(UlidGenerator<ChaCha8Rng>);

impl Ids {
    pub fn new(seed: u64) -> Self {
        Ids(UlidGenerator::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn next(&mut self) -> String {
        self.0.generate_string(T0 as u64)
    }
}

pub fn iso(ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(ms)
        .unwrap()
        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn event(id: &str, user: &str, at_ms: i64, online: bool) -> Value {
    let connectivity = if online {
        json!({"online": true, "network_type": "wifi", "speed_kbps": 900.0})
    } else {
        json!({"online": false, "network_type": "offline"})
    };
    json!({
        "event_id": id,
        "user_id": user,
        "kind": "page_view",
        "client_ts": iso(at_ms),
        "connectivity": connectivity,
        "sdk_version": "0.1.0",
        "schema_version": 1,
        "payload": {"page_id": "home"},
    })
}

pub fn batch(batch_id: &str, sent_ms: i64, events: Vec<Value>) -> Value {
    json!({
        "batch_id": batch_id,
        "app_id": "app",
        "device_id": "dev",
        "sent_ts": iso(sent_ms),
        "events": events,
    })
}

pub fn body(v: &Value) -> Vec<u8> {
    serde_json::to_vec(v).unwrap()
}

pub fn open(dir: &std::path::Path) -> IngestService {
    let store = Arc::new(Store::open(dir).unwrap());
    IngestService::open(store, Catalog::builtin().unwrap(), 100).unwrap()
}
