//! Seeded corpus generator and brute-force oracles shared by the pipeline
//! tests. The oracles recount everything from raw events with nested loops
//! and never call into the pipeline implementation.
#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::{DateTime, FixedOffset};
use fieldledger_core::{
    format_client_ts, ConnectivityInfo, EpochMillis, EventEnvelope, NetworkType, StoredEvent,
    UlidGenerator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// 2022-03-01T00:00:00Z
pub const START_MS: i64 = 1_646_092_800_000;
pub const DAY_MS: i64 = 86_400_000;

pub struct CorpusSpec {
    pub seed: u64,
    pub events: usize,
    pub users: usize,
    pub contents: usize,
    pub days: i64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { seed: 5000, events: 5000, users: 50, contents: 40, days: 30 }
    }
}

pub fn corpus(spec: &CorpusSpec) -> Vec<StoredEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ids = UlidGenerator::new(ChaCha8Rng::seed_from_u64(spec.seed ^ 0xfeed));
    let kinds = [
        ("page_view", 30u32),
        ("content_view", 25),
        ("content_complete", 10),
        ("purchase", 8),
        ("search", 10),
        ("session_start", 7),
        ("session_end", 5),
        ("custom", 5),
    ];
    let total: u32 = kinds.iter().map(|k| k.1).sum();
    let mut out = Vec::with_capacity(spec.events);
    for _ in 0..spec.events {
        let user = format!("u{:02}", rng.random_range(0..spec.users));
        // users cluster activity so sessions have more than one event
        let ts = START_MS + rng.random_range(0..spec.days * DAY_MS);
        let mut pick = rng.random_range(0..total);
        let kind = kinds
            .iter()
            .find(|(_, w)| {
                if pick < *w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap()
            .0;
        let content = format!("c{:02}", rng.random_range(0..spec.contents));
        let payload = match kind {
            "page_view" => json!({"page_id": "home"}),
            "content_view" => json!({"content_id": content, "duration_s": rng.random_range(1..600) as f64}),
            "content_complete" => json!({"content_id": content}),
            "purchase" if rng.random_bool(0.5) => {
                json!({"item_id": "amox", "amount": 2.5, "currency": "KES", "content_id": content})
            }
            "purchase" => json!({"item_id": "ors", "amount": 1.0, "currency": "KES"}),
            "search" => json!({"query": "fever"}),
            "session_start" => json!({}),
            "session_end" => json!({}),
            _ => json!({"name": "quiz_opened"}),
        };
        let connectivity = if rng.random_bool(0.75) {
            ConnectivityInfo::online(NetworkType::Cellular, Some(rng.random_range(50.0..5000.0)))
        } else {
            ConnectivityInfo::offline()
        };
        let offset = FixedOffset::east_opt(3 * 3600).unwrap();
        let client = DateTime::from_timestamp_millis(ts).unwrap().with_timezone(&offset);
        out.push(StoredEvent {
            app_id: "app".into(),
            envelope: EventEnvelope {
                event_id: ids.generate_string(ts as u64),
                user_id: user,
                kind: kind.into(),
                client_ts: format_client_ts(&client),
                adjusted_ts: Some(EpochMillis(ts)),
                location: None,
                connectivity,
                sdk_version: "1.0.0".into(),
                schema_version: 1,
                payload: serde_json::from_value(payload).unwrap(),
            },
        });
    }
    out
}

pub fn day_string(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms).unwrap().date_naive().to_string()
}

fn content_of(e: &StoredEvent) -> Option<String> {
    match e.envelope.kind.as_str() {
        "content_view" | "content_complete" | "purchase" => e
            .envelope
            .payload
            .get("content_id")
            .and_then(|v| v.as_str())
            .map(str::to_owned),
        _ => None,
    }
}

/// (subject_kind, subject_id, date, metric, value)
pub type OracleMetric = (String, String, String, String, f64);

/// Sessions by the gap-count formula: count = 1 + #gaps > limit, active time
/// = span - sum of those gaps.
fn session_stats(mut ts: Vec<i64>, gap_minutes: i64) -> (u64, i64) {
    ts.sort();
    let limit = gap_minutes * 60_000;
    let mut sessions = 1;
    let mut big_gaps = 0;
    for i in 1..ts.len() {
        let gap = ts[i] - ts[i - 1];
        if gap > limit {
            sessions += 1;
            big_gaps += gap;
        }
    }
    (sessions, ts[ts.len() - 1] - ts[0] - big_gaps)
}

pub fn oracle_metrics(events: &[StoredEvent]) -> Vec<OracleMetric> {
    let users: BTreeSet<String> = events.iter().map(|e| e.envelope.user_id.clone()).collect();
    let dates: BTreeSet<String> = events.iter().map(|e| day_string(e.adjusted_ms())).collect();
    let mut out = Vec::new();
    for u in &users {
        for d in &dates {
            let day: Vec<&StoredEvent> = events
                .iter()
                .filter(|e| &e.envelope.user_id == u && &day_string(e.adjusted_ms()) == d)
                .collect();
            if day.is_empty() {
                continue;
            }
            let n = day.len() as f64;
            let count = |k: &str| day.iter().filter(|e| e.envelope.kind == k).count() as f64;
            let offline = day.iter().filter(|e| !e.envelope.connectivity.online).count() as f64;
            let (sessions, active_ms) = session_stats(day.iter().map(|e| e.adjusted_ms()).collect(), 30);
            for (m, v) in [
                ("active_minutes", active_ms as f64 / 60_000.0),
                ("content_completions", count("content_complete")),
                ("content_views", count("content_view")),
                ("event_count", n),
                ("offline_event_fraction", offline / n),
                ("purchases", count("purchase")),
                ("session_count", sessions as f64),
            ] {
                out.push(("user".into(), u.clone(), d.clone(), m.into(), v));
            }
        }
    }
    let contents: BTreeSet<String> = events
        .iter()
        .filter(|e| matches!(e.envelope.kind.as_str(), "content_view" | "content_complete"))
        .filter_map(content_of)
        .collect();
    for c in &contents {
        for d in &dates {
            let day: Vec<&StoredEvent> = events
                .iter()
                .filter(|e| content_of(e).as_ref() == Some(c) && &day_string(e.adjusted_ms()) == d)
                .collect();
            let views: Vec<_> = day.iter().filter(|e| e.envelope.kind == "content_view").collect();
            let completions = day.iter().filter(|e| e.envelope.kind == "content_complete").count();
            if views.is_empty() && completions == 0 {
                continue;
            }
            let viewers: BTreeSet<_> = views.iter().map(|e| &e.envelope.user_id).collect();
            for (m, v) in [
                ("completions", completions as f64),
                ("unique_viewers", viewers.len() as f64),
                ("views", views.len() as f64),
            ] {
                out.push(("content".into(), c.clone(), d.clone(), m.into(), v));
            }
        }
    }
    out
}

/// KPIs straight from raw events, bypassing any metric rows.
/// (date, kpi, value) for every date in the observed range.
pub fn oracle_kpis(events: &[StoredEvent]) -> Vec<(String, String, f64)> {
    if events.is_empty() {
        return vec![];
    }
    let first = events.iter().map(|e| e.adjusted_ms()).min().unwrap();
    let last = events.iter().map(|e| e.adjusted_ms()).max().unwrap();
    let mut out = Vec::new();
    let mut day_start = first - first.rem_euclid(DAY_MS);
    while day_start <= last {
        let d = day_string(day_start);
        let day: Vec<&StoredEvent> = events.iter().filter(|e| day_string(e.adjusted_ms()) == d).collect();
        let users: BTreeSet<&String> = day.iter().map(|e| &e.envelope.user_id).collect();
        let mut sessions = 0u64;
        let mut active_ms = 0i64;
        for u in &users {
            let ts = day.iter().filter(|e| &&e.envelope.user_id == u).map(|e| e.adjusted_ms()).collect();
            let (s, a) = session_stats(ts, 30);
            sessions += s;
            active_ms += a;
        }
        let total = day.len() as f64;
        let offline = day.iter().filter(|e| !e.envelope.connectivity.online).count() as f64;
        out.push((d.clone(), "dau".into(), users.len() as f64));
        out.push((d.clone(), "total_events".into(), total));
        out.push((d.clone(), "total_purchases".into(), day.iter().filter(|e| e.envelope.kind == "purchase").count() as f64));
        out.push((
            d.clone(),
            "avg_session_minutes".into(),
            if sessions == 0 { 0.0 } else { active_ms as f64 / 60_000.0 / sessions as f64 },
        ));
        out.push((d, "offline_fraction".into(), if total == 0.0 { 0.0 } else { offline / total }));
        day_start += DAY_MS;
    }
    out
}

/// (subject_kind, subject_id, trait, value)
pub fn oracle_traits(events: &[StoredEvent]) -> Vec<(String, String, String, serde_json::Value)> {
    let mut out = Vec::new();
    let users: BTreeSet<&String> = events.iter().map(|e| &e.envelope.user_id).collect();
    for u in users {
        let mine: Vec<_> = events.iter().filter(|e| &e.envelope.user_id == u).collect();
        let dates: BTreeSet<String> = mine.iter().map(|e| day_string(e.adjusted_ms())).collect();
        let mut labels: Vec<&str> = mine.iter().map(|e| e.envelope.kind.as_str()).collect();
        labels.sort();
        labels.dedup();
        let mut best = ("", 0usize);
        for l in labels {
            let n = mine.iter().filter(|e| e.envelope.kind == l).count();
            if n > best.1 {
                best = (l, n);
            }
        }
        out.push(("user".into(), u.clone(), "days_active".into(), json!(dates.len())));
        out.push(("user".into(), u.clone(), "favorite_kind".into(), json!(best.0)));
        out.push(("user".into(), u.clone(), "first_seen".into(), json!(mine.iter().map(|e| e.adjusted_ms()).min().unwrap())));
        out.push(("user".into(), u.clone(), "last_seen".into(), json!(mine.iter().map(|e| e.adjusted_ms()).max().unwrap())));
    }
    let views: Vec<_> = events.iter().filter(|e| e.envelope.kind == "content_view").collect();
    let contents: BTreeSet<String> = views.iter().filter_map(|e| content_of(e)).collect();
    for c in contents {
        let mine: Vec<_> = views.iter().filter(|e| content_of(e).as_ref() == Some(&c)).collect();
        let viewers: BTreeSet<_> = mine.iter().map(|e| &e.envelope.user_id).collect();
        out.push(("content".into(), c.clone(), "first_viewed".into(), json!(mine.iter().map(|e| e.adjusted_ms()).min().unwrap())));
        out.push(("content".into(), c.clone(), "total_views".into(), json!(mine.len())));
        out.push(("content".into(), c.clone(), "unique_viewers".into(), json!(viewers.len())));
    }
    out
}

/// (user, content, ts, type, event_id), sorted
pub fn oracle_interactions(events: &[StoredEvent]) -> Vec<(String, String, i64, String, String)> {
    let mut out: Vec<_> = events
        .iter()
        .filter_map(|e| {
            let ty = match e.envelope.kind.as_str() {
                "content_view" => "view",
                "content_complete" => "complete",
                "purchase" => "purchase",
                _ => return None,
            };
            Some((
                e.envelope.user_id.clone(),
                content_of(e)?,
                e.adjusted_ms(),
                ty.to_owned(),
                e.envelope.event_id.clone(),
            ))
        })
        .collect();
    out.sort();
    out
}

pub fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}
