use std::collections::HashSet;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use fieldledger_core::curation::{active_flags, MAX_NOTE_LEN};
use fieldledger_core::{
    normalize_location, normalize_timestamp, sha256_hex, validate_raw, BatchRequest, BatchResponse,
    Catalog, CurationFlag, ErrorCode, EventResult, EventStatus, FieldError, StoredEvent,
    ValidationOutcome, ValidationStatus, Verdict,
};
use fieldledger_store::{CrashPoint, Store, StoreError, Version};

use crate::cursor::Cursor;
use crate::error::IngestError;
use crate::query::{EventFilter, EventsPage, QuarantinePage};
use crate::{EVENTS_TABLE, FLAGS_TABLE, QUARANTINE_TABLE};

/// Optimistic commit attempts before a batch is answered with 503.
pub const MAX_COMMIT_ATTEMPTS: usize = 10;
const CLOCK_JITTER_MS: i64 = 60_000;

/// A rejected event held for human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    /// As submitted; may be empty or malformed.
    pub event_id: String,
    pub received_at: String,
    pub received_at_ms: i64,
    pub batch_id: String,
    pub app_id: String,
    /// The event's JSON text exactly as it appeared in the request body.
    pub raw: String,
    pub raw_digest: String,
    pub outcome: ValidationOutcome,
}

struct IndexedEvent {
    ts: i64,
    event_id: String,
    version: Version,
    event: Arc<StoredEvent>,
}

struct IndexedQuarantine {
    ts: i64,
    seq: u64,
    version: Version,
    record: Arc<QuarantineRecord>,
}

#[derive(Default)]
struct State {
    events_version: Version,
    /// `(app_id, event_id)` of every stored event.
    seen: HashSet<(String, String)>,
    /// Event ids that may be flagged: stored or quarantined.
    known_ids: HashSet<String>,
    /// Sorted by `(ts, event_id)`.
    events: Vec<IndexedEvent>,

    quarantine_version: Version,
    quarantine_seen: HashSet<(String, String)>,
    /// Sorted by `(ts, seq)`.
    quarantine: Vec<IndexedQuarantine>,
    quarantine_rows: u64,

    flags_version: Version,
    flags: Vec<CurationFlag>,
}

enum Candidate {
    Valid(StoredEvent),
    Invalid {
        event_id: String,
        raw: String,
        digest: String,
        outcome: ValidationOutcome,
    },
}

/// Ingestion core shared by the HTTP handlers.
///
/// Writers are serialized by an in-process gate; the store's optimistic
/// commit still arbitrates between processes sharing a data directory.
/// Readers see the in-memory index, which only ever grows by whole commits.
pub struct IngestService {
    store: Arc<Store>,
    catalog: Catalog,
    batch_limit: usize,
    write_gate: Mutex<()>,
    state: RwLock<State>,
    injected_crash: Mutex<Option<CrashPoint>>,
}

fn now_string(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_default()
}

fn corrupt(e: impl std::fmt::Display) -> IngestError {
    IngestError::CorruptRow(e.to_string())
}

impl IngestService {
    /// Opens the service over `store`, creating its tables and rebuilding
    /// the dedup set and query index from the commit log.
    pub fn open(store: Arc<Store>, catalog: Catalog, batch_limit: usize) -> Result<Self, IngestError> {
        for t in [EVENTS_TABLE, QUARANTINE_TABLE, FLAGS_TABLE] {
            store.create_table(t)?;
        }
        let service = Self {
            store,
            catalog,
            batch_limit,
            write_gate: Mutex::new(()),
            state: RwLock::new(State::default()),
            injected_crash: Mutex::new(None),
        };
        service.refresh(&mut service.write_state())?;
        Ok(service)
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn batch_limit(&self) -> usize {
        self.batch_limit
    }

    /// Makes the next commit fail at `point`, as if the process died there.
    pub fn inject_crash(&self, point: CrashPoint) {
        *self.injected_crash.lock().unwrap_or_else(|p| p.into_inner()) = Some(point);
    }

    fn read_state(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write_state(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|p| p.into_inner())
    }

    fn gate(&self) -> MutexGuard<'_, ()> {
        self.write_gate.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Folds commits made since the last refresh (by this or another
    /// process) into the in-memory state.
    fn refresh(&self, state: &mut State) -> Result<(), IngestError> {
        for commit in self.store.commits_since(EVENTS_TABLE, state.events_version)? {
            let mut batch = Vec::new();
            for row in self.store.read_commit_rows(EVENTS_TABLE, &commit)? {
                batch.push(serde_json::from_value::<StoredEvent>(row).map_err(corrupt)?);
            }
            apply_events(state, commit.version, batch);
        }
        for commit in self.store.commits_since(QUARANTINE_TABLE, state.quarantine_version)? {
            let mut batch = Vec::new();
            for row in self.store.read_commit_rows(QUARANTINE_TABLE, &commit)? {
                batch.push(serde_json::from_value::<QuarantineRecord>(row).map_err(corrupt)?);
            }
            apply_quarantine(state, commit.version, batch);
        }
        for commit in self.store.commits_since(FLAGS_TABLE, state.flags_version)? {
            for row in self.store.read_commit_rows(FLAGS_TABLE, &commit)? {
                state.flags.push(serde_json::from_value(row).map_err(corrupt)?);
            }
            state.flags_version = commit.version;
        }
        Ok(())
    }

    /// Refreshes only when the store holds commits this process has not seen.
    fn sync(&self) -> Result<(), IngestError> {
        let stale = {
            let s = self.read_state();
            self.store.latest_version(EVENTS_TABLE)? != s.events_version
                || self.store.latest_version(QUARANTINE_TABLE)? != s.quarantine_version
                || self.store.latest_version(FLAGS_TABLE)? != s.flags_version
        };
        if stale {
            let _gate = self.gate();
            self.refresh(&mut self.write_state())?;
        }
        Ok(())
    }

    fn try_commit(&self, table: &str, rows: &[Value], expected: Version, meta: Value) -> Result<Version, StoreError> {
        let crash = self.injected_crash.lock().unwrap_or_else(|p| p.into_inner()).take();
        match crash {
            Some(point) => self.store.commit_with_crash(table, rows, expected, meta, point),
            None => self.store.commit(table, rows, expected, meta),
        }
    }

    /// Commits `rows` built from a fresh view of the state, retrying on
    /// version conflicts. `build` returns the rows to write for the current
    /// state, or an empty vector when there is nothing left to commit.
    fn commit_with_retry<T>(
        &self,
        table: &str,
        meta: &Value,
        mut build: impl FnMut(&State) -> Result<(Vec<Value>, T), IngestError>,
        apply: impl FnOnce(&mut State, Version, T),
    ) -> Result<(), IngestError> {
        for _ in 0..MAX_COMMIT_ATTEMPTS {
            let (rows, staged, expected) = {
                let mut state = self.write_state();
                self.refresh(&mut state)?;
                let (rows, staged) = build(&state)?;
                let expected = match table {
                    EVENTS_TABLE => state.events_version,
                    QUARANTINE_TABLE => state.quarantine_version,
                    _ => state.flags_version,
                };
                (rows, staged, expected)
            };
            if rows.is_empty() {
                return Ok(());
            }
            match self.try_commit(table, &rows, expected, meta.clone()) {
                Ok(version) => {
                    apply(&mut self.write_state(), version, staged);
                    return Ok(());
                }
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(IngestError::StorageUnavailable(e.to_string())),
            }
        }
        Err(IngestError::StorageUnavailable(format!(
            "{table}: gave up after {MAX_COMMIT_ATTEMPTS} conflicting commits"
        )))
    }

    /// Validates, deduplicates and stores one batch.
    ///
    /// `body` is the raw request body; the optional idempotency key must equal
    /// the batch id.
    pub fn ingest_batch(
        &self,
        body: &[u8],
        idempotency_key: Option<&str>,
        server_now_ms: i64,
    ) -> Result<BatchResponse, IngestError> {
        let request: BatchRequest<Box<RawValue>> =
            serde_json::from_slice(body).map_err(|e| IngestError::BatchMalformed(e.to_string()))?;
        if let Some(key) = idempotency_key {
            if key != request.batch_id {
                return Err(IngestError::BatchMalformed(format!(
                    "Idempotency-Key {key:?} does not match batch_id {:?}",
                    request.batch_id
                )));
            }
        }
        if request.app_id.is_empty() {
            return Err(IngestError::BatchMalformed("app_id is empty".into()));
        }
        if request.events.is_empty() {
            return Err(IngestError::BatchMalformed("batch has no events".into()));
        }
        if request.events.len() > self.batch_limit {
            return Err(IngestError::BatchMalformed(format!(
                "batch has {} events, limit is {}",
                request.events.len(),
                self.batch_limit
            )));
        }
        let sent_ms = normalize_timestamp(&request.sent_ts, 0)
            .map_err(|e| IngestError::BatchMalformed(format!("sent_ts: {e}")))?
            .0;
        let skew_ms = server_now_ms - sent_ms;

        let mut values = Vec::with_capacity(request.events.len());
        for raw in &request.events {
            let value: Value = serde_json::from_str(raw.get()).map_err(|e| IngestError::BatchMalformed(e.to_string()))?;
            if let Some(Ok(ts)) = value.get("client_ts").and_then(Value::as_str).map(|s| normalize_timestamp(s, 0)) {
                if ts.0 > sent_ms + CLOCK_JITTER_MS {
                    return Err(IngestError::BatchMalformed(format!(
                        "event client_ts {} is more than 60 s after sent_ts",
                        value["client_ts"]
                    )));
                }
            }
            values.push(value);
        }

        let candidates: Vec<Candidate> = request
            .events
            .iter()
            .zip(values)
            .map(|(raw, value)| self.classify(&request.app_id, raw.get(), &value, skew_ms))
            .collect();

        let received_at = now_string(server_now_ms);
        let meta = json!({"batch_id": request.batch_id, "app_id": request.app_id});
        let mut statuses: Vec<Option<EventStatus>> = vec![None; candidates.len()];

        let _gate = self.gate();
        let mut event_statuses = Vec::new();
        self.commit_with_retry(
            EVENTS_TABLE,
            &meta,
            |state| {
                let mut fresh = HashSet::new();
                let mut rows = Vec::new();
                let mut staged = Vec::new();
                event_statuses.clear();
                for (i, c) in candidates.iter().enumerate() {
                    if let Candidate::Valid(e) = c {
                        let key = (e.app_id.clone(), e.envelope.event_id.clone());
                        if state.seen.contains(&key) || !fresh.insert(key) {
                            event_statuses.push((i, EventStatus::Duplicate));
                        } else {
                            rows.push(serde_json::to_value(e).map_err(corrupt)?);
                            staged.push(e.clone());
                            event_statuses.push((i, EventStatus::Accepted));
                        }
                    }
                }
                Ok((rows, staged))
            },
            apply_events,
        )?;
        for (i, s) in &event_statuses {
            statuses[*i] = Some(*s);
        }

        let mut rejected_statuses = Vec::new();
        self.commit_with_retry(
            QUARANTINE_TABLE,
            &meta,
            |state| {
                let mut fresh = HashSet::new();
                let mut rows = Vec::new();
                let mut staged = Vec::new();
                rejected_statuses.clear();
                for (i, c) in candidates.iter().enumerate() {
                    if let Candidate::Invalid { event_id, raw, digest, outcome } = c {
                        let key = (event_id.clone(), digest.clone());
                        if state.quarantine_seen.contains(&key) || !fresh.insert(key) {
                            rejected_statuses.push((i, EventStatus::Duplicate));
                        } else {
                            let record = QuarantineRecord {
                                event_id: event_id.clone(),
                                received_at: received_at.clone(),
                                received_at_ms: server_now_ms,
                                batch_id: request.batch_id.clone(),
                                app_id: request.app_id.clone(),
                                raw: raw.clone(),
                                raw_digest: digest.clone(),
                                outcome: outcome.clone(),
                            };
                            rows.push(serde_json::to_value(&record).map_err(corrupt)?);
                            staged.push(record);
                            rejected_statuses.push((i, EventStatus::Rejected));
                        }
                    }
                }
                Ok((rows, staged))
            },
            apply_quarantine,
        )?;
        for (i, s) in &rejected_statuses {
            statuses[*i] = Some(*s);
        }

        let results = candidates
            .iter()
            .zip(statuses)
            .map(|(c, status)| {
                let status = status.expect("every candidate classified");
                match c {
                    Candidate::Valid(e) => EventResult {
                        event_id: e.envelope.event_id.clone(),
                        status,
                        errors: vec![],
                    },
                    Candidate::Invalid { event_id, outcome, .. } => EventResult {
                        event_id: event_id.clone(),
                        status,
                        errors: outcome.errors.clone(),
                    },
                }
            })
            .collect();
        Ok(BatchResponse { results })
    }

    fn classify(&self, app_id: &str, raw: &str, value: &Value, skew_ms: i64) -> Candidate {
        let (envelope, mut outcome) = validate_raw(value, &self.catalog);
        if let Some(mut envelope) = envelope.filter(|_| outcome.is_accepted()) {
            match normalize_timestamp(&envelope.client_ts, skew_ms) {
                Ok(adjusted) => {
                    envelope.adjusted_ts = Some(adjusted);
                    envelope.location = envelope
                        .location
                        .and_then(|p| normalize_location(p.lat, p.lon).ok());
                    return Candidate::Valid(StoredEvent {
                        app_id: app_id.to_owned(),
                        envelope,
                    });
                }
                Err(e) => {
                    outcome = ValidationOutcome {
                        status: ValidationStatus::Rejected,
                        errors: vec![FieldError {
                            code: ErrorCode::MalformedTimestamp,
                            field: "client_ts".into(),
                            message: format!("skew-corrected instant is out of range: {e}"),
                        }],
                    };
                }
            }
        }
        Candidate::Invalid {
            event_id: value.get("event_id").and_then(Value::as_str).unwrap_or_default().to_owned(),
            raw: raw.to_owned(),
            digest: sha256_hex(raw.as_bytes()),
            outcome,
        }
    }

    /// Events matching `filter`, in `(adjusted_ts, event_id)` order, pinned to
    /// the events version current at the first page.
    pub fn query_events(&self, filter: &EventFilter, limit: usize, cursor: Option<&str>) -> Result<EventsPage, IngestError> {
        let cursor = cursor.map(Cursor::decode).transpose()?;
        self.sync()?;
        let state = self.read_state();
        let pinned = cursor.as_ref().map_or(state.events_version, |c| c.version);
        let start = match &cursor {
            Some(c) => state
                .events
                .partition_point(|e| (e.ts, e.event_id.as_str()) <= (c.ts, c.key.as_str())),
            None => 0,
        };
        let mut hits = state.events[start..]
            .iter()
            .filter(|e| e.version <= pinned && filter.matches(&e.event))
            .take(limit + 1);
        let page: Vec<&IndexedEvent> = hits.by_ref().take(limit).collect();
        let next_cursor = match (hits.next(), page.last()) {
            (Some(_), Some(last)) => Some(
                Cursor {
                    version: pinned,
                    ts: last.ts,
                    key: last.event_id.clone(),
                }
                .encode(),
            ),
            _ => None,
        };
        Ok(EventsPage {
            events: page.into_iter().map(|e| (*e.event).clone()).collect(),
            next_cursor,
        })
    }

    /// Quarantine records ordered by receipt.
    pub fn list_quarantine(&self, limit: usize, cursor: Option<&str>) -> Result<QuarantinePage, IngestError> {
        let cursor = cursor.map(Cursor::decode).transpose()?;
        let after = match &cursor {
            Some(c) => Some((
                c.ts,
                c.key
                    .parse::<u64>()
                    .map_err(|_| IngestError::BadFilter("invalid cursor".into()))?,
            )),
            None => None,
        };
        self.sync()?;
        let state = self.read_state();
        let pinned = cursor.as_ref().map_or(state.quarantine_version, |c| c.version);
        let start = after.map_or(0, |a| state.quarantine.partition_point(|q| (q.ts, q.seq) <= a));
        let mut hits = state.quarantine[start..].iter().filter(|q| q.version <= pinned);
        let page: Vec<&IndexedQuarantine> = hits.by_ref().take(limit).collect();
        let next_cursor = match (hits.next(), page.last()) {
            (Some(_), Some(last)) => Some(
                Cursor {
                    version: pinned,
                    ts: last.ts,
                    key: last.seq.to_string(),
                }
                .encode(),
            ),
            _ => None,
        };
        Ok(QuarantinePage {
            records: page.into_iter().map(|q| (*q.record).clone()).collect(),
            next_cursor,
        })
    }

    /// Records a curation verdict. A later verdict by the same actor on the
    /// same event replaces the earlier one; `cleared` withdraws it.
    pub fn flag_record(
        &self,
        event_id: &str,
        verdict: Verdict,
        note: &str,
        actor: &str,
        server_now_ms: i64,
    ) -> Result<CurationFlag, IngestError> {
        if actor.trim().is_empty() {
            return Err(IngestError::InvalidFlag("actor is empty".into()));
        }
        if note.chars().count() > MAX_NOTE_LEN {
            return Err(IngestError::InvalidFlag(format!("note exceeds {MAX_NOTE_LEN} characters")));
        }
        self.sync()?;
        if !self.read_state().known_ids.contains(event_id) {
            return Err(IngestError::NotFound(format!("event {event_id}")));
        }
        let flag = CurationFlag {
            event_id: event_id.to_owned(),
            verdict,
            note: note.to_owned(),
            actor: actor.to_owned(),
            flagged_at: server_now_ms,
        };
        let row = serde_json::to_value(&flag).map_err(corrupt)?;
        let _gate = self.gate();
        self.commit_with_retry(
            FLAGS_TABLE,
            &json!({"actor": actor}),
            |_| Ok((vec![row.clone()], flag.clone())),
            |state, version, flag| {
                state.flags.push(flag);
                state.flags_version = version;
            },
        )?;
        Ok(flag)
    }

    /// Active flags, optionally for one event only.
    pub fn active_flags(&self, event_id: Option<&str>) -> Result<Vec<CurationFlag>, IngestError> {
        self.sync()?;
        let state = self.read_state();
        Ok(active_flags(&state.flags)
            .into_values()
            .filter(|f| event_id.is_none_or(|id| f.event_id == id))
            .cloned()
            .collect())
    }

    pub fn event_count(&self) -> usize {
        self.read_state().events.len()
    }

    pub fn quarantine_count(&self) -> usize {
        self.read_state().quarantine.len()
    }
}

fn apply_events(state: &mut State, version: Version, batch: Vec<StoredEvent>) {
    for event in batch {
        let ts = event.adjusted_ms();
        let id = event.envelope.event_id.clone();
        state.seen.insert((event.app_id.clone(), id.clone()));
        state.known_ids.insert(id.clone());
        let at = state
            .events
            .partition_point(|e| (e.ts, e.event_id.as_str()) <= (ts, id.as_str()));
        state.events.insert(
            at,
            IndexedEvent {
                ts,
                event_id: id,
                version,
                event: Arc::new(event),
            },
        );
    }
    state.events_version = version;
}

fn apply_quarantine(state: &mut State, version: Version, batch: Vec<QuarantineRecord>) {
    for record in batch {
        let seq = state.quarantine_rows;
        state.quarantine_rows += 1;
        state
            .quarantine_seen
            .insert((record.event_id.clone(), record.raw_digest.clone()));
        if !record.event_id.is_empty() {
            state.known_ids.insert(record.event_id.clone());
        }
        let ts = record.received_at_ms;
        let at = state.quarantine.partition_point(|q| (q.ts, q.seq) <= (ts, seq));
        state.quarantine.insert(
            at,
            IndexedQuarantine {
                ts,
                seq,
                version,
                record: Arc::new(record),
            },
        );
    }
    state.quarantine_version = version;
}
