use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use fieldledger_core::{EventKind, StoredEvent};

use fieldledger_core::Catalog;

use crate::metrics::content_ref;
use crate::model::{MetricRow, SubjectKind, TraitRow};

fn row(kind: SubjectKind, id: &str, name: &str, value: Value) -> TraitRow {
    TraitRow {
        subject_kind: kind,
        subject_id: id.to_owned(),
        trait_name: name.to_owned(),
        value,
    }
}

/// User and content traits over the non-excluded events, sorted by
/// `(subject_kind, subject_id, trait)`.
pub fn derive_traits(events: &[StoredEvent], metrics: &[MetricRow], catalog: &Catalog) -> Vec<TraitRow> {
    struct UserAcc<'a> {
        first: i64,
        last: i64,
        kinds: BTreeMap<&'a str, u64>,
    }
    let mut users: BTreeMap<&str, UserAcc> = BTreeMap::new();
    struct ContentAcc<'a> {
        views: u64,
        viewers: BTreeSet<&'a str>,
        first_viewed: i64,
    }
    let mut contents: BTreeMap<&str, ContentAcc> = BTreeMap::new();

    for e in events {
        let ts = e.adjusted_ms();
        let acc = users.entry(e.envelope.user_id.as_str()).or_insert(UserAcc {
            first: ts,
            last: ts,
            kinds: BTreeMap::new(),
        });
        acc.first = acc.first.min(ts);
        acc.last = acc.last.max(ts);
        *acc.kinds.entry(e.envelope.kind.as_str()).or_default() += 1;

        if e.envelope.event_kind() == Some(EventKind::ContentView) {
            if let Some(content) = content_ref(e, catalog) {
                let c = contents.entry(content).or_insert(ContentAcc {
                    views: 0,
                    viewers: BTreeSet::new(),
                    first_viewed: ts,
                });
                c.views += 1;
                c.viewers.insert(e.envelope.user_id.as_str());
                c.first_viewed = c.first_viewed.min(ts);
            }
        }
    }

    let mut days_active: BTreeMap<&str, u64> = BTreeMap::new();
    for m in metrics {
        if m.subject_kind == SubjectKind::User && m.metric == "event_count" && m.value >= 1.0 {
            *days_active.entry(m.subject_id.as_str()).or_default() += 1;
        }
    }

    let mut rows = Vec::new();
    for (user, acc) in &users {
        // ascending label order, so the first strict maximum wins ties
        let favorite = acc
            .kinds
            .iter()
            .fold(None::<(&str, u64)>, |best, (k, n)| match best {
                Some((_, bn)) if bn >= *n => best,
                _ => Some((k, *n)),
            })
            .map(|(k, _)| k)
            .unwrap_or_default();
        let id = *user;
        rows.push(row(SubjectKind::User, id, "days_active", json!(days_active.get(id).copied().unwrap_or(0))));
        rows.push(row(SubjectKind::User, id, "favorite_kind", json!(favorite)));
        rows.push(row(SubjectKind::User, id, "first_seen", json!(acc.first)));
        rows.push(row(SubjectKind::User, id, "last_seen", json!(acc.last)));
    }
    for (content, acc) in &contents {
        rows.push(row(SubjectKind::Content, content, "first_viewed", json!(acc.first_viewed)));
        rows.push(row(SubjectKind::Content, content, "total_views", json!(acc.views)));
        rows.push(row(SubjectKind::Content, content, "unique_viewers", json!(acc.viewers.len())));
    }
    rows
}
