use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::model::{KpiRow, MetricRow, SubjectKind, KPIS};

#[derive(Default)]
struct DayTotals {
    dau: u64,
    events: f64,
    purchases: f64,
    active_minutes: f64,
    sessions: f64,
    offline_weighted: f64,
}

/// Daily KPIs from user metrics only. Every date between the first and last
/// observed date gets a full row set; idle days carry zeros.
pub fn aggregate_kpis(metrics: &[MetricRow]) -> Vec<KpiRow> {
    // (date, user) -> metric -> value; BTreeMaps fix the summation order
    let mut per_user: BTreeMap<(&str, &str), BTreeMap<&str, f64>> = BTreeMap::new();
    for m in metrics.iter().filter(|m| m.subject_kind == SubjectKind::User) {
        per_user
            .entry((m.date.as_str(), m.subject_id.as_str()))
            .or_default()
            .insert(m.metric.as_str(), m.value);
    }

    let mut days: BTreeMap<NaiveDate, DayTotals> = BTreeMap::new();
    for ((date, _user), values) in &per_user {
        let Ok(date) = date.parse::<NaiveDate>() else {
            continue;
        };
        let get = |k: &str| values.get(k).copied().unwrap_or(0.0);
        let day = days.entry(date).or_default();
        let events = get("event_count");
        if events >= 1.0 {
            day.dau += 1;
        }
        day.events += events;
        day.purchases += get("purchases");
        day.active_minutes += get("active_minutes");
        day.sessions += get("session_count");
        day.offline_weighted += get("offline_event_fraction") * events;
    }

    let (Some(first), Some(last)) = (days.keys().next().copied(), days.keys().next_back().copied())
    else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for date in first.iter_days().take_while(|d| *d <= last) {
        let empty = DayTotals::default();
        let t = days.get(&date).unwrap_or(&empty);
        let avg_session = if t.sessions > 0.0 {
            t.active_minutes / t.sessions
        } else {
            0.0
        };
        let offline = if t.events > 0.0 {
            t.offline_weighted / t.events
        } else {
            0.0
        };
        let values = [t.dau as f64, t.events, t.purchases, avg_session, offline];
        for (kpi, value) in KPIS.iter().zip(values) {
            rows.push(KpiRow {
                date: date.to_string(),
                kpi: (*kpi).to_owned(),
                value,
            });
        }
    }
    rows
}
