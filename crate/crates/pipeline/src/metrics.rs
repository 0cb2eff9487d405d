use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use fieldledger_core::curation::excluded_event_ids;
use fieldledger_core::{Catalog, CurationFlag, EventKind, StoredEvent};

use crate::model::{date_of, MetricRow, SubjectKind};
use crate::sessions::sessionize;

/// Drops events with an active `invalid` flag and orders the rest by
/// `(adjusted_ts, event_id)`.
pub fn exclude_flagged(events: &[StoredEvent], flags: &[CurationFlag]) -> Vec<StoredEvent> {
    let excluded = excluded_event_ids(flags);
    let mut kept: Vec<StoredEvent> = events
        .iter()
        .filter(|e| !excluded.contains(&e.envelope.event_id))
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        a.adjusted_ms()
            .cmp(&b.adjusted_ms())
            .then_with(|| a.envelope.event_id.cmp(&b.envelope.event_id))
    });
    kept
}

/// Content identifier carried by the event, when its schema declares a
/// `content_ref` field and the field is present.
pub fn content_ref<'a>(event: &'a StoredEvent, catalog: &Catalog) -> Option<&'a str> {
    let kind = event.envelope.event_kind()?;
    let schema = catalog.get(kind, event.envelope.schema_version)?;
    let field = schema.content_ref_field()?;
    event.envelope.payload.get(field)?.as_str()
}

fn metric(kind: SubjectKind, id: &str, date: NaiveDate, name: &str, value: f64) -> MetricRow {
    MetricRow {
        subject_kind: kind,
        subject_id: id.to_owned(),
        date: date.to_string(),
        metric: name.to_owned(),
        value,
    }
}

/// Per-user and per-content daily metrics over the non-excluded events,
/// sorted by `(subject_kind, subject_id, date, metric)`.
pub fn compute_metrics(
    events: &[StoredEvent],
    flags: &[CurationFlag],
    catalog: &Catalog,
    gap_minutes: i64,
) -> Vec<MetricRow> {
    let events = exclude_flagged(events, flags);

    let mut per_user_day: BTreeMap<(&str, NaiveDate), Vec<&StoredEvent>> = BTreeMap::new();
    for e in &events {
        per_user_day
            .entry((e.envelope.user_id.as_str(), date_of(e.adjusted_ms())))
            .or_default()
            .push(e);
    }

    let mut rows = Vec::new();
    for ((user, date), day) in &per_user_day {
        let count_kind = |k: EventKind| day.iter().filter(|e| e.envelope.event_kind() == Some(k)).count();
        let event_count = day.len();
        let offline = day.iter().filter(|e| !e.envelope.connectivity.online).count();
        // events are already in time order
        let stamps: Vec<i64> = day.iter().map(|e| e.adjusted_ms()).collect();
        let sessions = sessionize(&stamps, gap_minutes);
        let active_ms: i64 = sessions.iter().map(|s| s.duration_ms()).sum();

        let values = [
            ("event_count", event_count as f64),
            ("session_count", sessions.len() as f64),
            ("active_minutes", active_ms as f64 / 60_000.0),
            ("content_views", count_kind(EventKind::ContentView) as f64),
            ("content_completions", count_kind(EventKind::ContentComplete) as f64),
            ("purchases", count_kind(EventKind::Purchase) as f64),
            ("offline_event_fraction", offline as f64 / event_count as f64),
        ];
        for (name, value) in values {
            rows.push(metric(SubjectKind::User, user, *date, name, value));
        }
    }

    #[derive(Default)]
    struct ContentDay<'a> {
        views: u64,
        completions: u64,
        viewers: BTreeSet<&'a str>,
    }
    let mut per_content_day: BTreeMap<(&str, NaiveDate), ContentDay> = BTreeMap::new();
    for e in &events {
        let kind = e.envelope.event_kind();
        if !matches!(kind, Some(EventKind::ContentView | EventKind::ContentComplete)) {
            continue;
        }
        let Some(content) = content_ref(e, catalog) else {
            continue;
        };
        let day = per_content_day
            .entry((content, date_of(e.adjusted_ms())))
            .or_default();
        if kind == Some(EventKind::ContentView) {
            day.views += 1;
            day.viewers.insert(e.envelope.user_id.as_str());
        } else {
            day.completions += 1;
        }
    }
    for ((content, date), day) in &per_content_day {
        rows.push(metric(SubjectKind::Content, content, *date, "views", day.views as f64));
        rows.push(metric(SubjectKind::Content, content, *date, "completions", day.completions as f64));
        rows.push(metric(
            SubjectKind::Content,
            content,
            *date,
            "unique_viewers",
            day.viewers.len() as f64,
        ));
    }

    sort_metrics(&mut rows);
    rows
}

pub(crate) fn sort_metrics(rows: &mut [MetricRow]) {
    rows.sort_by(|a, b| {
        (a.subject_kind, &a.subject_id, &a.date, &a.metric)
            .cmp(&(b.subject_kind, &b.subject_id, &b.date, &b.metric))
    });
}
