//! Minimal experiment tracking.
//!
//! Each run is one JSON document under `<data_dir>/runs/<run_id>.json`,
//! rewritten atomically (temp file + rename) on creation, parameter updates
//! and finalization. Logged metrics go to an append-only sidecar,
//! `<run_id>.metrics.ndjson`, so concurrent writers never rewrite each
//! other's points. A run pins exact table versions together with the digest
//! of each pinned snapshot, which lets anyone check later that the inputs
//! still read back identically.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{SecondsFormat, Utc};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use fieldledger_core::UlidGenerator;
use fieldledger_store::{Store, StoreError, Version};

#[derive(Debug, thiserror::Error)]
pub enum TrackerError {
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("run {0} is closed")]
    RunClosed(String),
    #[error("unknown version {version} of table {table}")]
    UnknownVersion { table: String, version: Version },
    #[error("a run can only be finalized as finished or failed")]
    InvalidFinalStatus,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed run document {}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

pub type Result<T, E = TrackerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub table: String,
    pub version: Version,
    /// Digest of the table's rows at `version`, taken at run creation.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub key: String,
    pub value: f64,
    pub step: i64,
    pub logged_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub run_id: String,
    pub name: String,
    pub status: RunStatus,
    pub params: BTreeMap<String, String>,
    pub snapshot_refs: Vec<SnapshotRef>,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<String>,
    /// Filled in on read from the metrics sidecar, ordered by (key, step).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub logged_metrics: Vec<MetricPoint>,
}

/// Outcome of re-reading one pinned snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SnapshotCheck {
    pub table: String,
    pub version: Version,
    pub recorded: String,
    pub current: String,
}

impl SnapshotCheck {
    pub fn matches(&self) -> bool {
        self.recorded == self.current
    }
}

pub struct Tracker {
    store: Arc<Store>,
    dir: PathBuf,
    ids: Mutex<UlidGenerator<StdRng>>,
    // serializes read-modify-write of run documents within this process
    doc_lock: Mutex<()>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Tracker {
    /// Opens the registry in `<store root>/runs`.
    pub fn open(store: Arc<Store>) -> Result<Self> {
        let dir = store.root().join("runs");
        fs::create_dir_all(&dir).map_err(|source| TrackerError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            store,
            dir,
            ids: Mutex::new(UlidGenerator::new(StdRng::from_os_rng())),
            doc_lock: Mutex::new(()),
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn mint_run_id(&self) -> String {
        let ms = Utc::now().timestamp_millis().max(0) as u64;
        self.ids.lock().expect("id generator poisoned").generate_string(ms)
    }

    fn doc_path(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.json"))
    }

    fn metrics_path(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.metrics.ndjson"))
    }

    pub fn create_run(&self, name: &str, snapshot_refs: &[(&str, Version)]) -> Result<ExperimentRun> {
        self.create_run_with(&self.mint_run_id(), name, snapshot_refs, BTreeMap::new())
    }

    /// Creates a run under a caller-chosen id (pipelines reuse their run id).
    pub fn create_run_with(
        &self,
        run_id: &str,
        name: &str,
        snapshot_refs: &[(&str, Version)],
        params: BTreeMap<String, String>,
    ) -> Result<ExperimentRun> {
        let mut refs = Vec::with_capacity(snapshot_refs.len());
        for (table, version) in snapshot_refs {
            let rows = match self.store.read_at(table, *version) {
                Ok(rows) => rows,
                Err(StoreError::UnknownVersion { .. }) | Err(StoreError::UnknownTable(_)) => {
                    return Err(TrackerError::UnknownVersion {
                        table: (*table).to_owned(),
                        version: *version,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            refs.push(SnapshotRef {
                table: (*table).to_owned(),
                version: *version,
                digest: rows.digest(),
            });
        }
        let run = ExperimentRun {
            run_id: run_id.to_owned(),
            name: name.to_owned(),
            status: RunStatus::Running,
            params,
            snapshot_refs: refs,
            started_at: now(),
            ended_at: None,
            logged_metrics: Vec::new(),
        };
        let _guard = self.doc_lock.lock().expect("run lock poisoned");
        self.write_doc(&run)?;
        Ok(run)
    }

    fn write_doc(&self, run: &ExperimentRun) -> Result<()> {
        let path = self.doc_path(&run.run_id);
        let mut stored = run.clone();
        stored.logged_metrics.clear();
        let bytes = serde_json::to_vec_pretty(&stored).map_err(|source| TrackerError::Json {
            path: path.clone(),
            source,
        })?;
        let temp = self.dir.join(format!(".tmp-{}-{}", run.run_id, std::process::id()));
        let io_err = |path: &Path| {
            let path = path.to_owned();
            move |source| TrackerError::Io { path, source }
        };
        fs::write(&temp, bytes).map_err(io_err(&temp))?;
        fs::rename(&temp, &path).map_err(io_err(&path))
    }

    fn read_doc(&self, run_id: &str) -> Result<ExperimentRun> {
        let path = self.doc_path(run_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(TrackerError::UnknownRun(run_id.to_owned()))
            }
            Err(source) => return Err(TrackerError::Io { path, source }),
        };
        serde_json::from_slice(&bytes).map_err(|source| TrackerError::Json { path, source })
    }

    fn require_running(&self, run_id: &str) -> Result<ExperimentRun> {
        let run = self.read_doc(run_id)?;
        if run.status != RunStatus::Running {
            return Err(TrackerError::RunClosed(run_id.to_owned()));
        }
        Ok(run)
    }

    pub fn log_metric(&self, run_id: &str, key: &str, value: f64, step: i64) -> Result<()> {
        let _guard = self.doc_lock.lock().expect("run lock poisoned");
        self.require_running(run_id)?;
        let point = MetricPoint {
            key: key.to_owned(),
            value,
            step,
            logged_at: now(),
        };
        let path = self.metrics_path(run_id);
        let mut line = serde_json::to_vec(&point).map_err(|source| TrackerError::Json {
            path: path.clone(),
            source,
        })?;
        line.push(b'\n');
        // one write per line with O_APPEND keeps lines whole across processes
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(&line))
            .map_err(|source| TrackerError::Io { path, source })
    }

    pub fn log_param(&self, run_id: &str, key: &str, value: &str) -> Result<()> {
        let _guard = self.doc_lock.lock().expect("run lock poisoned");
        let mut run = self.require_running(run_id)?;
        run.params.insert(key.to_owned(), value.to_owned());
        self.write_doc(&run)
    }

    pub fn finalize_run(&self, run_id: &str, status: RunStatus) -> Result<ExperimentRun> {
        if status == RunStatus::Running {
            return Err(TrackerError::InvalidFinalStatus);
        }
        {
            let _guard = self.doc_lock.lock().expect("run lock poisoned");
            let mut run = self.require_running(run_id)?;
            run.status = status;
            run.ended_at = Some(now());
            self.write_doc(&run)?;
        }
        self.get_run(run_id)
    }

    /// Metric points of a run, ordered by key then step; equal steps keep
    /// logging order.
    pub fn metrics(&self, run_id: &str) -> Result<Vec<MetricPoint>> {
        let path = self.metrics_path(run_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(source) => return Err(TrackerError::Io { path, source }),
        };
        let mut points = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<MetricPoint>)
            .collect::<serde_json::Result<Vec<_>>>()
            .map_err(|source| TrackerError::Json { path, source })?;
        points.sort_by(|a, b| a.key.cmp(&b.key).then(a.step.cmp(&b.step)));
        Ok(points)
    }

    pub fn metric_series(&self, run_id: &str, key: &str) -> Result<Vec<MetricPoint>> {
        Ok(self
            .metrics(run_id)?
            .into_iter()
            .filter(|p| p.key == key)
            .collect())
    }

    pub fn get_run(&self, run_id: &str) -> Result<ExperimentRun> {
        let mut run = self.read_doc(run_id)?;
        run.logged_metrics = self.metrics(run_id)?;
        Ok(run)
    }

    /// All runs, oldest first.
    pub fn list_runs(&self) -> Result<Vec<ExperimentRun>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|source| TrackerError::Io {
            path: self.dir.clone(),
            source,
        })? {
            let entry = entry.map_err(|source| TrackerError::Io {
                path: self.dir.clone(),
                source,
            })?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                if !id.starts_with('.') {
                    ids.push(id.to_owned());
                }
            }
        }
        ids.sort();
        ids.iter().map(|id| self.get_run(id)).collect()
    }

    /// Re-reads every pinned snapshot and compares digests.
    pub fn check_snapshots(&self, run_id: &str) -> Result<Vec<SnapshotCheck>> {
        let run = self.read_doc(run_id)?;
        run.snapshot_refs
            .iter()
            .map(|r| {
                Ok(SnapshotCheck {
                    table: r.table.clone(),
                    version: r.version,
                    recorded: r.digest.clone(),
                    current: self.store.read_at(&r.table, r.version)?.digest(),
                })
            })
            .collect()
    }
}
