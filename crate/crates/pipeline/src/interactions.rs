use fieldledger_core::{Catalog, EventKind, StoredEvent};

use crate::metrics::content_ref;
use crate::model::{InteractionRow, InteractionType};

/// One row per event that carries a content reference, ordered by
/// `(adjusted_ts, event_id)`.
pub fn extract_interactions(events: &[StoredEvent], catalog: &Catalog) -> Vec<InteractionRow> {
    let mut rows: Vec<InteractionRow> = events
        .iter()
        .filter_map(|e| {
            let interaction_type = match e.envelope.event_kind()? {
                EventKind::ContentView => InteractionType::View,
                EventKind::ContentComplete => InteractionType::Complete,
                EventKind::Purchase => InteractionType::Purchase,
                _ => return None,
            };
            Some(InteractionRow {
                user_id: e.envelope.user_id.clone(),
                content_id: content_ref(e, catalog)?.to_owned(),
                adjusted_ts: e.adjusted_ms(),
                interaction_type,
                event_id: e.envelope.event_id.clone(),
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.adjusted_ts
            .cmp(&b.adjusted_ts)
            .then_with(|| a.event_id.cmp(&b.event_id))
    });
    rows
}
