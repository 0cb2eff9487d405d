use serde::{Deserialize, Serialize};

/// Outcome of one scenario run. Field meanings are documented in
/// `docs/simulation.md`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub generated: u64,
    pub delivered_unique: u64,
    pub duplicates_detected_serverside: u64,
    pub rejected: u64,
    pub stored_duplicates: u64,
    pub phantom_events: u64,
    pub max_queue_depth: u64,
    pub final_retained: u64,
    pub flushes: u64,
    pub requests_sent: u64,
    pub requests_lost: u64,
    /// Simulated time spent in requests, per flush that sent anything.
    pub flush_latencies_ms: Vec<u64>,
}

impl ScenarioReport {
    /// Pretty JSON with a trailing newline; the on-disk report format.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
