//! Human curation verdicts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub const MAX_NOTE_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Invalid,
    Suspicious,
    Cleared,
}

/// One row of the `curation_flags` table. Rows are appended, never edited; a
/// later flag by the same actor on the same event replaces the earlier one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationFlag {
    pub event_id: String,
    pub verdict: Verdict,
    pub note: String,
    pub actor: String,
    /// Server instant, epoch milliseconds.
    pub flagged_at: i64,
}

/// Active flag per `(event_id, actor)`, given flags in commit order.
/// A `cleared` verdict cancels the actor's earlier verdict and is itself not
/// reported as active.
pub fn active_flags(flags: &[CurationFlag]) -> BTreeMap<(String, String), &CurationFlag> {
    let mut active = BTreeMap::new();
    for flag in flags {
        let key = (flag.event_id.clone(), flag.actor.clone());
        if flag.verdict == Verdict::Cleared {
            active.remove(&key);
        } else {
            active.insert(key, flag);
        }
    }
    active
}

/// Events carrying an active `invalid` flag from any actor.
pub fn excluded_event_ids(flags: &[CurationFlag]) -> BTreeSet<String> {
    active_flags(flags)
        .into_values()
        .filter(|f| f.verdict == Verdict::Invalid)
        .map(|f| f.event_id.clone())
        .collect()
}
