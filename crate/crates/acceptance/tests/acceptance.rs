//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

#[path = "../../pipeline/tests/support/mod.rs"]
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use fieldledger_core::{Catalog, EventStatus, StoredEvent, UlidGenerator, Verdict};
use fieldledger_ingest::{spawn_background, IngestService, ServerConfig, ServerHandle};
use fieldledger_pipeline::{
    aggregate_kpis, compute_metrics, derive_traits, exclude_flagged, extract_interactions, read_run_output,
    run_pipeline, CheckVerdict, InteractionRow, KpiRow, MetricRow, NoHook, PipelineOptions, PipelineRun,
    SubjectKind, TraitRow,
};
use fieldledger_sdk::{DurableQueue, HEADER};
use fieldledger_sim::{fetch_server_ids, run_scenario, Scenario};
use fieldledger_store::{CrashPoint, Store};
use fieldledger_tracker::Tracker;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !{ $cond } {
            return Err(format!($($msg)+));
        }
    };
}

/// 2022-03-01T10:00:00Z
const T0: i64 = 1_646_128_800_000;

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn server(dir: &Path) -> ServerHandle {
    spawn_background(&ServerConfig {
        data_dir: dir.join("data"),
        batch_limit: 100,
        console_dir: dir.join("console"),
    })
    .expect("server starts")
}

fn iso(ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(ms)
        .unwrap()
        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn ingest(store: Arc<Store>) -> IngestService {
    IngestService::open(store, Catalog::builtin().unwrap(), 100).unwrap()
}

fn page_view(id: &str, user: &str, at_ms: i64) -> Value {
    json!({
        "event_id": id,
        "user_id": user,
        "kind": "page_view",
        "client_ts": iso(at_ms),
        "connectivity": {"online": true, "network_type": "wifi", "speed_kbps": 800.0},
        "sdk_version": "0.1.0",
        "schema_version": 1,
        "payload": {"page_id": "home"},
    })
}

fn batch_body(batch_id: &str, events: Vec<Value>) -> Vec<u8> {
    serde_json::to_vec(&json!({
        "batch_id": batch_id,
        "app_id": "app",
        "device_id": "dev",
        "sent_ts": iso(T0),
        "events": events,
    }))
    .unwrap()
}

// ---------------------------------------------------------------- 1 and 8

static LOSSY_REPORT: OnceLock<String> = OnceLock::new();

fn lossy_link() -> Scenario {
    Scenario::load(&repo_path("scenarios/lossy_link.json")).expect("lossy_link.json loads")
}

fn exactly_once_under_loss() -> Outcome {
    let scenario = lossy_link();
    ensure!(scenario.workload.n_users == 50, "scenario has {} users", scenario.workload.n_users);
    ensure!((scenario.offline_fraction() - 0.4).abs() < 1e-9, "offline fraction {}", scenario.offline_fraction());

    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let started = Instant::now();
    let report = run_scenario(&scenario, &srv.base_url()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let ids = fetch_server_ids(&srv.base_url()).map_err(|e| e.to_string())?;
    LOSSY_REPORT.set(report.to_json()).ok();

    let unique: BTreeSet<&String> = ids.iter().collect();
    ensure!(report.generated == 10_000, "generated {}", report.generated);
    ensure!(unique.len() == 10_000, "server holds {} unique ids", unique.len());
    ensure!(ids.len() == unique.len(), "{} stored duplicates", ids.len() - unique.len());
    ensure!(report.delivered_unique == 10_000, "delivered_unique {}", report.delivered_unique);
    ensure!(report.phantom_events == 0, "{} phantom events", report.phantom_events);
    ensure!(report.final_retained == 0, "final_retained {}", report.final_retained);
    ensure!(report.requests_lost > 0, "no request was lost; the link is not lossy");
    ensure!(elapsed < Duration::from_secs(60), "took {:.1}s", elapsed.as_secs_f64());
    Ok(format!(
        "10000 unique, 0 duplicates, {} lost requests, {} server-side dups, {:.1}s",
        report.requests_lost,
        report.duplicates_detected_serverside,
        elapsed.as_secs_f64()
    ))
}

fn simulation_determinism() -> Outcome {
    let first = match LOSSY_REPORT.get() {
        Some(r) => r.clone(),
        None => {
            let dir = tempfile::tempdir().unwrap();
            let srv = server(dir.path());
            run_scenario(&lossy_link(), &srv.base_url()).map_err(|e| e.to_string())?.to_json()
        }
    };
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path());
    let second = run_scenario(&lossy_link(), &srv.base_url()).map_err(|e| e.to_string())?.to_json();
    ensure!(first.as_bytes() == second.as_bytes(), "reports differ");
    Ok(format!("two runs, {} identical report bytes", first.len()))
}

// ---------------------------------------------------------------- 2

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Defect {
    MalformedTimestamp,
    UnknownKind,
    MissingField,
}

impl Defect {
    fn code(self) -> &'static str {
        match self {
            Defect::MalformedTimestamp => "MALFORMED_TIMESTAMP",
            Defect::UnknownKind => "UNKNOWN_KIND",
            Defect::MissingField => "MISSING_FIELD",
        }
    }
}

fn validation_accounting() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let svc = ingest(Arc::new(Store::open(dir.path()).unwrap()));
    let mut ids = UlidGenerator::new(ChaCha8Rng::seed_from_u64(2));
    let mut injected: BTreeMap<String, Defect> = BTreeMap::new();
    let mut seen_codes: BTreeSet<String> = BTreeSet::new();
    let (mut accepted, mut rejected) = (0, 0);

    for b in 0..10 {
        let mut events = Vec::new();
        for i in 0..100 {
            let n = b * 100 + i;
            let id = ids.generate_string(T0 as u64);
            let mut e = page_view(&id, &format!("u{}", n % 17), T0 - 60_000);
            if n % 5 == 0 {
                let defect = [Defect::MalformedTimestamp, Defect::UnknownKind, Defect::MissingField][(n / 5) % 3];
                match defect {
                    Defect::MalformedTimestamp => e["client_ts"] = json!("2022-02-30 25:61"),
                    Defect::UnknownKind => e["kind"] = json!("teleport"),
                    Defect::MissingField => e["payload"] = json!({}),
                }
                injected.insert(id, defect);
            }
            events.push(e);
        }
        let batch_id = ids.generate_string(T0 as u64);
        let resp = svc.ingest_batch(&batch_body(&batch_id, events), None, T0).map_err(|e| e.to_string())?;
        let (a, r) = (resp.count(EventStatus::Accepted), resp.count(EventStatus::Rejected));
        ensure!(a + r == 100, "batch {b}: accepted {a} + rejected {r} != 100");
        for result in &resp.results {
            let is_defect = injected.contains_key(&result.event_id);
            ensure!(
                is_defect == (result.status == EventStatus::Rejected),
                "{} has status {:?}",
                result.event_id,
                result.status
            );
            seen_codes.extend(result.errors.iter().map(|e| e.code.as_str().to_owned()));
        }
        accepted += a;
        rejected += r;
    }
    ensure!(accepted == 800 && rejected == 200, "accepted {accepted}, rejected {rejected}");
    ensure!(svc.event_count() == 800, "{} stored events", svc.event_count());

    let mut records = Vec::new();
    let mut cursor: Option<String> = None;
    loop {
        let page = svc.list_quarantine(1000, cursor.as_deref()).map_err(|e| e.to_string())?;
        records.extend(page.records);
        match page.next_cursor {
            Some(c) => cursor = Some(c),
            None => break,
        }
    }
    ensure!(records.len() == 200, "{} quarantine records", records.len());
    let mut classes_in_quarantine = BTreeSet::new();
    for rec in &records {
        let defect = injected.get(&rec.event_id).ok_or(format!("{} was not a defect", rec.event_id))?;
        ensure!(
            rec.outcome.errors.iter().any(|e| e.code.as_str() == defect.code()),
            "{} lacks {}",
            rec.event_id,
            defect.code()
        );
        classes_in_quarantine.insert(*defect);
    }
    for d in [Defect::MalformedTimestamp, Defect::UnknownKind, Defect::MissingField] {
        ensure!(seen_codes.contains(d.code()), "{} never reported", d.code());
        ensure!(classes_in_quarantine.contains(&d), "{d:?} missing from quarantine");
    }
    Ok("accepted 800, quarantined 200, 3/3 defect classes reported".into())
}

// ---------------------------------------------------------------- 3

fn time_travel_stability() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let svc = ingest(store.clone());
    let mut ids = UlidGenerator::new(ChaCha8Rng::seed_from_u64(3));
    let mut recorded = Vec::new();
    for c in 0..50 {
        let events = (0..20)
            .map(|i| page_view(&ids.generate_string(T0 as u64), &format!("u{i}"), T0 - c * 1000))
            .collect();
        let batch_id = ids.generate_string(T0 as u64);
        svc.ingest_batch(&batch_body(&batch_id, events), None, T0).map_err(|e| e.to_string())?;
        let v = store.latest_version("events").unwrap();
        recorded.push((v, store.read_at("events", v).unwrap().digest()));
    }
    let versions: Vec<u64> = recorded.iter().map(|r| r.0).collect();
    ensure!(versions == (1..=50).collect::<Vec<_>>(), "versions {versions:?}");

    // a fresh handle has no caches
    let reopened = Store::open(dir.path()).unwrap();
    for (v, digest) in &recorded {
        let rows = reopened.read_at("events", *v).unwrap();
        ensure!(rows.len() == *v as usize * 20, "v{v} has {} rows", rows.len());
        ensure!(&rows.digest() == digest, "digest of v{v} changed");
    }
    let report = reopened.verify("events").unwrap();
    ensure!(report.is_clean(), "verify: {report:?}");
    Ok("50 versions re-read with equal digests, verify clean".into())
}

// ---------------------------------------------------------------- 4

fn rows(prefix: &str, n: usize) -> Vec<Value> {
    (0..n).map(|i| json!({"id": format!("{prefix}{i}"), "n": i})).collect()
}

fn store_crash_points() -> Result<usize, String> {
    for point in CrashPoint::ALL {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.create_table("t").unwrap();
        store.commit("t", &rows("a", 4), 0, Value::Null).unwrap();
        let pre = store.read_latest("t").unwrap();
        let _ = store.commit_with_crash("t", &rows("b", 3), 1, Value::Null, point);
        drop(store);

        let store = Store::open(dir.path()).unwrap();
        let latest = store.latest_version("t").map_err(|e| format!("{point:?}: {e}"))?;
        let now = store.read_latest("t").map_err(|e| format!("{point:?}: unreadable: {e}"))?;
        match latest {
            1 => ensure!(now.rows == pre.rows, "{point:?}: v1 rows changed"),
            2 => {
                let mut want = pre.rows.clone();
                want.extend(rows("b", 3));
                ensure!(now.rows == want, "{point:?}: partial v2");
            }
            v => return Err(format!("{point:?}: latest {v}")),
        }
        ensure!(latest == 1 + point.is_after_publish() as u64, "{point:?}: latest {latest}");
        ensure!(store.verify("t").unwrap().is_clean(), "{point:?}: verify not clean");
        store.commit("t", &rows("c", 1), latest, Value::Null).map_err(|e| format!("{point:?}: {e}"))?;
    }
    Ok(CrashPoint::ALL.len())
}

/// Record end offsets, read straight off the on-disk layout.
fn record_boundaries(bytes: &[u8]) -> Vec<usize> {
    let mut out = vec![HEADER.len()];
    let mut pos = HEADER.len();
    while pos + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 8 + len;
        out.push(pos);
    }
    out
}

fn queue_truncation() -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.flq");
    let pushed: Vec<String> = {
        let mut q = DurableQueue::open(&path, 100).unwrap();
        let mut gen = UlidGenerator::new(ChaCha8Rng::seed_from_u64(4));
        // records of varying length
        for i in 0..9 {
            let mut v = page_view(&gen.generate_string(T0 as u64), &format!("user-{}", "x".repeat(i * 7)), T0);
            v["payload"]["page_id"] = json!("p".repeat(1 + i * 13));
            q.push(serde_json::from_value(v).unwrap()).unwrap();
        }
        q.iter().map(|e| e.event_id.clone()).collect()
    };
    let bytes = std::fs::read(&path).unwrap();
    let bounds = record_boundaries(&bytes);
    ensure!(*bounds.last().unwrap() == bytes.len(), "layout walk ends at {}", bounds.last().unwrap());
    ensure!(bounds.len() == 10, "{} boundaries", bounds.len());

    for cut in 0..=bytes.len() {
        let p = dir.path().join(format!("cut{cut}.flq"));
        std::fs::write(&p, &bytes[..cut]).unwrap();
        let q = DurableQueue::open(&p, 100).map_err(|e| format!("cut {cut}: {e}"))?;
        let complete = bounds.iter().filter(|b| **b <= cut).count().saturating_sub(1);
        ensure!(q.len() == complete, "cut {cut}: recovered {} of {complete}", q.len());
        let got: Vec<_> = q.iter().map(|e| e.event_id.clone()).collect();
        ensure!(got == pushed[..complete], "cut {cut}: wrong prefix");
        let clean = cut == 0 || bounds.contains(&cut);
        ensure!(
            q.truncation_warnings() == u64::from(!clean),
            "cut {cut}: {} warnings",
            q.truncation_warnings()
        );
        let expect_len = if cut < HEADER.len() { HEADER.len() } else { bounds[complete] };
        let on_disk = std::fs::metadata(&p).unwrap().len() as usize;
        ensure!(on_disk == expect_len, "cut {cut}: file left at {on_disk} bytes");
    }
    Ok(bytes.len() + 1)
}

fn crash_atomicity() -> Outcome {
    let points = store_crash_points()?;
    let offsets = queue_truncation()?;
    Ok(format!("{points} store crash points atomic, {offsets} queue cut offsets recover the maximal prefix"))
}

// ---------------------------------------------------------------- 5

fn corpus_store(events: &[StoredEvent]) -> (tempfile::TempDir, Tracker) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    store.create_table("events").unwrap();
    store.create_table("curation_flags").unwrap();
    let rows: Vec<Value> = events.iter().map(|e| serde_json::to_value(e).unwrap()).collect();
    for chunk in rows.chunks(1000) {
        let v = store.latest_version("events").unwrap();
        store.commit("events", chunk, v, Value::Null).unwrap();
    }
    let tracker = Tracker::open(store).unwrap();
    (dir, tracker)
}

fn subject(k: SubjectKind) -> String {
    match k {
        SubjectKind::User => "user".into(),
        SubjectKind::Content => "content".into(),
    }
}

fn output<T: serde::de::DeserializeOwned>(tracker: &Tracker, run: &PipelineRun, table: &str) -> Vec<T> {
    read_run_output(tracker.store(), table, run.outputs[table])
        .unwrap()
        .into_iter()
        .map(|v| serde_json::from_value(v).unwrap())
        .collect()
}

fn compare_kpis(got: &[KpiRow], want: &[(String, String, f64)]) -> Result<(), String> {
    let got: BTreeMap<(&str, &str), f64> = got.iter().map(|k| ((k.date.as_str(), k.kpi.as_str()), k.value)).collect();
    ensure!(got.len() == want.len(), "{} KPI rows, oracle has {}", got.len(), want.len());
    for (d, k, v) in want {
        let g = *got.get(&(d.as_str(), k.as_str())).ok_or(format!("missing {d} {k}"))?;
        let ok = match k.as_str() {
            "avg_session_minutes" | "offline_fraction" => oracle::rel_close(g, *v),
            _ => g == *v,
        };
        ensure!(ok, "{d} {k}: {g} vs oracle {v}");
    }
    Ok(())
}

fn pipeline_oracle_equivalence() -> Outcome {
    let spec = oracle::CorpusSpec::default();
    ensure!(
        (spec.events, spec.days, spec.users, spec.contents) == (5000, 30, 50, 40),
        "corpus spec drifted"
    );
    let events = oracle::corpus(&spec);
    let (_dir, tracker) = corpus_store(&events);
    let catalog = Catalog::builtin().unwrap();
    let run = run_pipeline(&tracker, &catalog, &PipelineOptions::default(), &NoHook).map_err(|e| e.to_string())?;
    ensure!(
        run.check_reports.iter().all(|r| r.verdict != CheckVerdict::Fail),
        "a stage check failed"
    );

    let mut metrics: Vec<MetricRow> = output(&tracker, &run, "user_metrics");
    metrics.extend(output::<MetricRow>(&tracker, &run, "content_metrics"));
    let mut got: Vec<_> = metrics
        .iter()
        .map(|m| (subject(m.subject_kind), m.subject_id.clone(), m.date.clone(), m.metric.clone(), m.value))
        .collect();
    let mut want = oracle::oracle_metrics(&events);
    let key = |a: &oracle::OracleMetric, b: &oracle::OracleMetric| (&a.0, &a.1, &a.2, &a.3).cmp(&(&b.0, &b.1, &b.2, &b.3));
    got.sort_by(key);
    want.sort_by(key);
    ensure!(got == want, "metric rows differ ({} vs {} rows)", got.len(), want.len());

    let traits: Vec<TraitRow> = output(&tracker, &run, "traits");
    let mut got: Vec<_> = traits
        .iter()
        .map(|t| (subject(t.subject_kind), t.subject_id.clone(), t.trait_name.clone(), t.value.clone()))
        .collect();
    let mut want = oracle::oracle_traits(&events);
    got.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
    want.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
    ensure!(got == want, "trait rows differ");

    let interactions: Vec<InteractionRow> = output(&tracker, &run, "interactions");
    let mut got: Vec<_> = interactions
        .iter()
        .map(|r| {
            let ty = serde_json::to_value(r.interaction_type).unwrap().as_str().unwrap().to_owned();
            (r.user_id.clone(), r.content_id.clone(), r.adjusted_ts, ty, r.event_id.clone())
        })
        .collect();
    got.sort();
    ensure!(got == oracle::oracle_interactions(&events), "interaction rows differ");

    // path one: committed KPIs, rolled up from metric rows
    let kpis: Vec<KpiRow> = output(&tracker, &run, "kpis");
    let raw = oracle::oracle_kpis(&events);
    compare_kpis(&kpis, &raw)?;
    // path two: recomputed in-process straight from the event list
    let fresh = aggregate_kpis(&compute_metrics(&events, &[], &catalog, 30));
    compare_kpis(&fresh, &raw)?;
    let direct_traits = derive_traits(&exclude_flagged(&events, &[]), &compute_metrics(&events, &[], &catalog, 30), &catalog);
    ensure!(direct_traits.len() == traits.len(), "trait count differs between paths");
    ensure!(extract_interactions(&events, &catalog).len() == interactions.len(), "interaction count differs");

    Ok(format!(
        "{} metric, {} trait, {} interaction, {} KPI rows equal the oracle",
        metrics.len(),
        traits.len(),
        interactions.len(),
        kpis.len()
    ))
}

// ---------------------------------------------------------------- 6

fn output_digests(tracker: &Tracker, run: &PipelineRun) -> BTreeMap<String, Vec<String>> {
    run.outputs
        .iter()
        .map(|(table, v)| {
            let commit = tracker.store().history(table).unwrap().into_iter().find(|c| c.version == *v).unwrap();
            (table.clone(), commit.files.iter().map(|f| f.digest.clone()).collect())
        })
        .collect()
}

fn reproducibility() -> Outcome {
    let events = oracle::corpus(&oracle::CorpusSpec { seed: 66, events: 3000, ..Default::default() });
    let (_dir, tracker) = corpus_store(&events);
    let catalog = Catalog::builtin().unwrap();
    let pinned = PipelineOptions {
        events_version: Some(tracker.store().latest_version("events").unwrap()),
        flags_version: Some(0),
        ..Default::default()
    };
    let a = run_pipeline(&tracker, &catalog, &pinned, &NoHook).map_err(|e| e.to_string())?;
    let b = run_pipeline(&tracker, &catalog, &pinned, &NoHook).map_err(|e| e.to_string())?;
    ensure!(!a.outputs.is_empty(), "no outputs");
    ensure!(output_digests(&tracker, &a) == output_digests(&tracker, &b), "rerun digests differ");

    let svc = ingest(tracker.store().clone());
    let mut ids = UlidGenerator::new(ChaCha8Rng::seed_from_u64(6));
    for c in 0..50 {
        let events = (0..10)
            .map(|i| page_view(&ids.generate_string(T0 as u64), &format!("late{i}"), T0 - c * 1000))
            .collect();
        let batch_id = ids.generate_string(T0 as u64);
        svc.ingest_batch(&batch_body(&batch_id, events), None, T0).map_err(|e| e.to_string())?;
    }
    let events_now = tracker.store().latest_version("events").unwrap();
    ensure!(events_now == pinned.events_version.unwrap() + 50, "events at v{events_now}");

    for run in [&a, &b] {
        let checks = tracker.check_snapshots(&run.run_id).map_err(|e| e.to_string())?;
        ensure!(!checks.is_empty(), "no snapshot refs");
        ensure!(checks.iter().all(|c| c.matches()), "snapshot mismatch: {checks:?}");
    }
    let replay = run_pipeline(&tracker, &catalog, &pinned, &NoHook).map_err(|e| e.to_string())?;
    ensure!(output_digests(&tracker, &a) == output_digests(&tracker, &replay), "pinned replay differs");
    Ok(format!("{} output tables byte-identical, snapshot refs match after 50 commits", a.outputs.len()))
}

// ---------------------------------------------------------------- 7

fn per_date<F: Fn(&Value) -> bool>(rows: &[Value], keep: F) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in rows.iter().filter(|r| keep(r)) {
        *out.entry(r["date"].as_str().unwrap().to_owned()).or_insert(0.0) += r["value"].as_f64().unwrap();
    }
    out
}

fn curation_loop() -> Outcome {
    let events = oracle::corpus(&oracle::CorpusSpec { seed: 77, events: 2000, days: 10, ..Default::default() });
    let (_dir, tracker) = corpus_store(&events);
    let catalog = Catalog::builtin().unwrap();
    let store = tracker.store().clone();
    let svc = ingest(store.clone());
    let base = run_pipeline(&tracker, &catalog, &PipelineOptions::default(), &NoHook).map_err(|e| e.to_string())?;

    let targets: Vec<&StoredEvent> = events.iter().skip(100).step_by(317).take(5).collect();
    for e in &targets {
        svc.flag_record(&e.envelope.event_id, Verdict::Invalid, "bad device clock", "analyst", T0)
            .map_err(|e| e.to_string())?;
    }
    let flagged = run_pipeline(&tracker, &catalog, &PipelineOptions::default(), &NoHook).map_err(|e| e.to_string())?;
    ensure!(flagged.flags_version == 5, "flags at v{}", flagged.flags_version);

    let mut removed: BTreeMap<String, f64> = BTreeMap::new();
    for e in &targets {
        *removed.entry(oracle::day_string(e.adjusted_ms())).or_insert(0.0) += 1.0;
    }
    let is_event_count = |r: &Value| r["metric"] == "event_count";
    let is_total = |r: &Value| r["kpi"] == "total_events";
    let counts = |run: &PipelineRun| per_date(&read_run_output(&store, "user_metrics", run.outputs["user_metrics"]).unwrap(), is_event_count);
    let totals = |run: &PipelineRun| per_date(&read_run_output(&store, "kpis", run.outputs["kpis"]).unwrap(), is_total);
    for (name, before, after) in [
        ("event_count", counts(&base), counts(&flagged)),
        ("total_events", totals(&base), totals(&flagged)),
    ] {
        for (date, b) in &before {
            let a = after.get(date).copied().unwrap_or(0.0);
            let want = removed.get(date).copied().unwrap_or(0.0);
            ensure!(b - a == want, "{name} on {date}: dropped {} not {want}", b - a);
        }
    }
    // the flagged run equals an oracle over the surviving events
    let survivors: Vec<StoredEvent> = events
        .iter()
        .filter(|e| !targets.iter().any(|t| t.envelope.event_id == e.envelope.event_id))
        .cloned()
        .collect();
    compare_kpis(&output::<KpiRow>(&tracker, &flagged, "kpis"), &oracle::oracle_kpis(&survivors))?;

    for e in &targets {
        svc.flag_record(&e.envelope.event_id, Verdict::Cleared, "", "analyst", T0 + 1)
            .map_err(|e| e.to_string())?;
    }
    let cleared = run_pipeline(&tracker, &catalog, &PipelineOptions::default(), &NoHook).map_err(|e| e.to_string())?;
    ensure!(output_digests(&tracker, &base) == output_digests(&tracker, &cleared), "clearing did not restore outputs");
    Ok(format!("5 flags remove exactly their events on {} date(s); clearing restores digests", removed.len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "exactly-once under loss", exactly_once_under_loss),
        (2, "validation accounting", validation_accounting),
        (3, "time-travel stability", time_travel_stability),
        (4, "crash atomicity", crash_atomicity),
        (5, "pipeline oracle equivalence", pipeline_oracle_equivalence),
        (6, "reproducibility", reproducibility),
        (7, "curation loop", curation_loop),
        (8, "simulation determinism", simulation_determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({why}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
