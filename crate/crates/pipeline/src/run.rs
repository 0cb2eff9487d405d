use std::collections::BTreeMap;
use std::fmt;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use fieldledger_core::{Catalog, CurationFlag, StoredEvent};
use fieldledger_store::{Store, StoreError, Version};
use fieldledger_tracker::{RunStatus, Tracker, TrackerError};

use crate::checks::{run_checks, CheckReport, StageState};
use crate::interactions::extract_interactions;
use crate::kpis::aggregate_kpis;
use crate::metrics::{compute_metrics, exclude_flagged};
use crate::model::{InteractionRow, KpiRow, MetricRow, SubjectKind, TraitRow};
use crate::sessions::DEFAULT_GAP_MINUTES;
use crate::traits::derive_traits;

pub const EVENTS_TABLE: &str = "events";
pub const FLAGS_TABLE: &str = "curation_flags";
pub const OUTPUT_TABLES: [&str; 5] = ["user_metrics", "content_metrics", "kpis", "traits", "interactions"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Metrics,
    Kpis,
    Traits,
    Interactions,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Metrics => "metrics",
            Stage::Kpis => "kpis",
            Stage::Traits => "traits",
            Stage::Interactions => "interactions",
        })
    }
}

/// Materialized outputs of a run so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutputs {
    pub metrics: Vec<MetricRow>,
    pub kpis: Vec<KpiRow>,
    pub traits: Vec<TraitRow>,
    pub interactions: Vec<InteractionRow>,
}

/// Observer invoked after each stage's transform and before its checks.
/// Used to inject faults when exercising the check rules end to end.
pub trait StageHook {
    fn after_stage(&self, _stage: Stage, _outputs: &mut StageOutputs) {}
}

pub struct NoHook;

impl StageHook for NoHook {}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Defaults to the latest version.
    pub events_version: Option<Version>,
    pub flags_version: Option<Version>,
    pub session_gap_minutes: i64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            events_version: None,
            flags_version: None,
            session_gap_minutes: DEFAULT_GAP_MINUTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub events_version: Version,
    pub flags_version: Version,
    /// Output table -> committed version. Tables with no rows are not committed.
    pub outputs: BTreeMap<String, Version>,
    pub started_at: String,
    pub finished_at: String,
    pub check_reports: Vec<CheckReport>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {} failed its checks", .0.stage)]
    ChecksFailed(Box<CheckReport>),
    #[error("output commit lost a race: {0}")]
    VersionConflict(StoreError),
    #[error("corrupt input row: {0}")]
    CorruptInput(String),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

impl From<StoreError> for PipelineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::VersionConflict { .. } => PipelineError::VersionConflict(e),
            other => PipelineError::Store(other),
        }
    }
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs all stages on pinned input versions and commits the outputs.
///
/// The run is registered in the tracker before any work starts and is
/// finalized as `failed` (with the failing stage recorded as a parameter) or
/// `finished` (with output versions and check reports).
pub fn run_pipeline(
    tracker: &Tracker,
    catalog: &Catalog,
    options: &PipelineOptions,
    hook: &dyn StageHook,
) -> Result<PipelineRun, PipelineError> {
    let store: &Store = tracker.store();
    store.create_table(EVENTS_TABLE)?;
    store.create_table(FLAGS_TABLE)?;
    let events_version = match options.events_version {
        Some(v) => v,
        None => store.latest_version(EVENTS_TABLE)?,
    };
    let flags_version = match options.flags_version {
        Some(v) => v,
        None => store.latest_version(FLAGS_TABLE)?,
    };

    let started = Utc::now();
    let run_id = tracker.mint_run_id();
    let params = BTreeMap::from([
        ("events_version".to_owned(), events_version.to_string()),
        ("flags_version".to_owned(), flags_version.to_string()),
        ("session_gap_minutes".to_owned(), options.session_gap_minutes.to_string()),
    ]);
    tracker.create_run_with(
        &run_id,
        "behavior_pipeline",
        &[(EVENTS_TABLE, events_version), (FLAGS_TABLE, flags_version)],
        params,
    )?;

    let result = execute(store, catalog, options, hook, &run_id, events_version, flags_version, started.timestamp_millis());
    match result {
        Ok((outputs, reports)) => {
            let warnings: u64 = reports.iter().map(|r| r.warnings()).sum();
            tracker.log_metric(&run_id, "check_warnings", warnings as f64, 0)?;
            for (table, version) in &outputs {
                tracker.log_param(&run_id, &format!("output.{table}"), &version.to_string())?;
            }
            tracker.log_param(&run_id, "check_reports", &serde_json::to_string(&reports).unwrap_or_default())?;
            tracker.finalize_run(&run_id, RunStatus::Finished)?;
            Ok(PipelineRun {
                run_id,
                events_version,
                flags_version,
                outputs,
                started_at: started.to_rfc3339_opts(SecondsFormat::Millis, true),
                finished_at: now_rfc3339(),
                check_reports: reports,
            })
        }
        Err((err, reports)) => {
            if let PipelineError::ChecksFailed(report) = &err {
                tracker.log_param(&run_id, "failed_stage", &report.stage.to_string())?;
            }
            tracker.log_param(&run_id, "error", &err.to_string())?;
            tracker.log_param(&run_id, "check_reports", &serde_json::to_string(&reports).unwrap_or_default())?;
            tracker.finalize_run(&run_id, RunStatus::Failed)?;
            Err(err)
        }
    }
}

type ExecResult = Result<(BTreeMap<String, Version>, Vec<CheckReport>), (PipelineError, Vec<CheckReport>)>;

#[allow(clippy::too_many_arguments)]
fn execute(
    store: &Store,
    catalog: &Catalog,
    options: &PipelineOptions,
    hook: &dyn StageHook,
    run_id: &str,
    events_version: Version,
    flags_version: Version,
    run_started_ms: i64,
) -> ExecResult {
    let mut reports = Vec::new();
    macro_rules! bail {
        ($e:expr) => {
            return Err(($e.into(), reports))
        };
    }

    let events = match load_events(store, events_version) {
        Ok(e) => e,
        Err(e) => bail!(e),
    };
    let flags: Vec<CurationFlag> = match store
        .read_at(FLAGS_TABLE, flags_version)
        .map_err(PipelineError::from)
        .and_then(|r| r.deserialize().map_err(|e| PipelineError::CorruptInput(e.to_string())))
    {
        Ok(f) => f,
        Err(e) => bail!(e),
    };
    let included = exclude_flagged(&events, &flags);

    // Output versions are pinned before any work so a concurrent run that
    // commits first makes this one lose the race.
    let mut expected = BTreeMap::new();
    for table in OUTPUT_TABLES {
        let latest = store
            .create_table(table)
            .and_then(|_| store.latest_version(table));
        match latest {
            Ok(v) => expected.insert(table, v),
            Err(e) => bail!(e),
        };
    }

    let mut out = StageOutputs::default();
    for stage in [Stage::Metrics, Stage::Kpis, Stage::Traits, Stage::Interactions] {
        match stage {
            Stage::Metrics => {
                out.metrics = compute_metrics(&events, &flags, catalog, options.session_gap_minutes)
            }
            Stage::Kpis => out.kpis = aggregate_kpis(&out.metrics),
            Stage::Traits => out.traits = derive_traits(&included, &out.metrics, catalog),
            Stage::Interactions => out.interactions = extract_interactions(&included, catalog),
        }
        hook.after_stage(stage, &mut out);
        let report = run_checks(
            stage,
            &StageState {
                events: &included,
                metrics: &out.metrics,
                kpis: &out.kpis,
                traits: &out.traits,
                interactions: &out.interactions,
                run_started_ms,
            },
        );
        let failed = report.is_fail();
        reports.push(report.clone());
        if failed {
            bail!(PipelineError::ChecksFailed(Box::new(report)));
        }
    }

    let (user_metrics, content_metrics): (Vec<_>, Vec<_>) = out
        .metrics
        .into_iter()
        .partition(|m| m.subject_kind == SubjectKind::User);
    let meta = json!({"run_id": run_id, "events_version": events_version, "flags_version": flags_version});
    let mut outputs = BTreeMap::new();
    let mut commit = |table: &str, rows: Vec<serde_json::Value>| -> Result<(), PipelineError> {
        if rows.is_empty() {
            return Ok(());
        }
        let v = store.commit(table, &rows, expected[table], meta.clone())?;
        outputs.insert(table.to_owned(), v);
        Ok(())
    };
    let to_values = |rows: Result<Vec<serde_json::Value>, serde_json::Error>| {
        rows.map_err(|e| PipelineError::CorruptInput(e.to_string()))
    };
    let staged = [
        ("user_metrics", to_values(user_metrics.iter().map(serde_json::to_value).collect())),
        ("content_metrics", to_values(content_metrics.iter().map(serde_json::to_value).collect())),
        ("kpis", to_values(out.kpis.iter().map(serde_json::to_value).collect())),
        ("traits", to_values(out.traits.iter().map(serde_json::to_value).collect())),
        ("interactions", to_values(out.interactions.iter().map(serde_json::to_value).collect())),
    ];
    for (table, rows) in staged {
        let result = rows.and_then(|rows| commit(table, rows));
        if let Err(e) = result {
            bail!(e);
        }
    }
    Ok((outputs, reports))
}

/// Rows written by the run that committed `version` of an output table.
/// Output tables accumulate one full recompute per run, so the snapshot at
/// `version` also holds earlier runs' rows.
pub fn read_run_output(store: &Store, table: &str, version: Version) -> Result<Vec<serde_json::Value>, StoreError> {
    let history = store.history(table)?;
    let latest = history.len() as Version;
    match history.into_iter().find(|c| c.version == version) {
        Some(commit) => store.read_commit_rows(table, &commit),
        None => Err(StoreError::UnknownVersion {
            table: table.to_owned(),
            requested: version,
            latest,
        }),
    }
}

fn load_events(store: &Store, version: Version) -> Result<Vec<StoredEvent>, PipelineError> {
    let rows = store.read_at(EVENTS_TABLE, version)?;
    let mut events = Vec::with_capacity(rows.len());
    for row in &rows.rows {
        let event: StoredEvent = serde_json::from_value(row.clone())
            .map_err(|e| PipelineError::CorruptInput(e.to_string()))?;
        if event.envelope.adjusted_ts.is_none() {
            return Err(PipelineError::CorruptInput(format!(
                "event {} has no adjusted_ts",
                event.envelope.event_id
            )));
        }
        events.push(event);
    }
    Ok(events)
}
