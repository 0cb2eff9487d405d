use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use fieldledger_core::{EventKind, Payload};

use crate::scenario::Scenario;

/// One event a simulated user will log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedEvent {
    /// Milliseconds since the start of the scenario.
    pub t_ms: u64,
    pub user_id: String,
    pub kind: EventKind,
    pub payload: Payload,
}

fn payload(kind: EventKind, rng: &mut ChaCha8Rng) -> Payload {
    let content = format!("c{:03}", rng.random_range(0..40));
    const PAGES: [&str; 4] = ["home", "catalog", "lesson", "profile"];
    const QUERIES: [&str; 4] = ["maize", "loans", "weather", "fertilizer"];
    let v = match kind {
        EventKind::PageView => json!({"page_id": PAGES[rng.random_range(0..4)]}),
        EventKind::ContentView => json!({"content_id": content, "duration_s": rng.random_range(1..600) as f64}),
        EventKind::ContentComplete => json!({"content_id": content, "score": rng.random_range(0..=100) as f64, "passed": rng.random_bool(0.7)}),
        EventKind::Purchase => json!({
            "item_id": format!("sku{}", rng.random_range(0..25)),
            "amount": rng.random_range(50..5000) as f64 / 100.0,
            "currency": "KES",
            "content_id": content,
        }),
        EventKind::Search => json!({"query": QUERIES[rng.random_range(0..4)], "results_count": rng.random_range(0..50)}),
        EventKind::SessionStart => json!({"cold_start": rng.random_bool(0.2)}),
        EventKind::SessionEnd => json!({}),
        EventKind::Custom => json!({"name": "tap", "value": rng.random_range(0..10) as f64}),
    };
    serde_json::from_value(v).expect("payload is an object")
}

/// Expands the scenario workload into a time-ordered event plan.
pub fn plan_events(scenario: &Scenario) -> Vec<PlannedEvent> {
    let w = &scenario.workload;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let kinds: Vec<EventKind> = w.kind_mix.keys().map(|k| k.parse().expect("validated kind")).collect();
    let dist = WeightedIndex::new(w.kind_mix.values().copied()).expect("validated weights");
    let until_ms = (scenario.generate_until_s() * 1000.0) as u64;

    let mut plan = Vec::with_capacity(w.n_users * w.events_per_user);
    for u in 0..w.n_users {
        let user_id = format!("user-{u:03}");
        for _ in 0..w.events_per_user {
            let kind = kinds[dist.sample(&mut rng)];
            plan.push(PlannedEvent {
                t_ms: rng.random_range(0..until_ms.max(1)),
                user_id: user_id.clone(),
                kind,
                payload: payload(kind, &mut rng),
            });
        }
    }
    plan.sort_by(|a, b| (a.t_ms, &a.user_id).cmp(&(b.t_ms, &b.user_id)));
    plan
}
