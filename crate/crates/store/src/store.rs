use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

use fieldledger_core::sha256_hex;

use crate::error::{Result, StoreError};
use crate::is_valid_table_name;
use crate::record::{encode_rows, Commit, DataFileRef, RowSet};

/// Table version; 0 is the empty table.
pub type Version = u64;

pub(crate) const LOG_DIR: &str = "_log";
pub(crate) const TEMP_PREFIX: &str = ".tmp-";

#[derive(Debug, Clone)]
pub struct StoreOptions {
    /// fsync data files, log entries and directories on commit.
    pub fsync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self { fsync: true }
    }
}

/// Points in the commit sequence where a crash can be injected.
///
/// A crash at any point before [`CrashPoint::BeforeTempCleanup`] leaves the
/// table at its previous version; at that last point the log entry is already
/// published and the table is at the new version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrashPoint {
    BeforeDataWrite,
    MidDataWrite,
    BeforeDataRename,
    BeforeLogWrite,
    MidLogWrite,
    BeforeLogPublish,
    BeforeTempCleanup,
}

impl CrashPoint {
    pub const ALL: [CrashPoint; 7] = [
        CrashPoint::BeforeDataWrite,
        CrashPoint::MidDataWrite,
        CrashPoint::BeforeDataRename,
        CrashPoint::BeforeLogWrite,
        CrashPoint::MidLogWrite,
        CrashPoint::BeforeLogPublish,
        CrashPoint::BeforeTempCleanup,
    ];

    /// Whether the commit is visible after a crash at this point.
    pub fn is_after_publish(self) -> bool {
        self == CrashPoint::BeforeTempCleanup
    }
}

/// Handle on a store root. Cheap to share behind an `Arc`; any number of
/// handles, in any number of processes, may point at the same directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    options: StoreOptions,
    // published commits never change, so they are cached per table
    commits: Mutex<HashMap<String, Arc<Vec<Commit>>>>,
    files: Mutex<HashMap<String, Arc<Vec<Value>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with(root, StoreOptions::default())
    }

    pub fn open_with(root: impl Into<PathBuf>, options: StoreOptions) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(StoreError::io(&root))?;
        Ok(Self {
            root,
            options,
            commits: Mutex::new(HashMap::new()),
            files: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn table_dir(&self, table: &str) -> PathBuf {
        self.root.join(table)
    }

    fn log_path(&self, table: &str, version: Version) -> PathBuf {
        self.table_dir(table)
            .join(LOG_DIR)
            .join(format!("{version:08}.json"))
    }

    fn check_table(&self, table: &str) -> Result<PathBuf> {
        if !is_valid_table_name(table) {
            return Err(StoreError::InvalidTableName(table.to_owned()));
        }
        let dir = self.table_dir(table);
        if !dir.join(LOG_DIR).is_dir() {
            return Err(StoreError::UnknownTable(table.to_owned()));
        }
        Ok(dir)
    }

    /// Creates the table if it does not exist yet.
    pub fn create_table(&self, table: &str) -> Result<()> {
        if !is_valid_table_name(table) {
            return Err(StoreError::InvalidTableName(table.to_owned()));
        }
        let log = self.table_dir(table).join(LOG_DIR);
        fs::create_dir_all(&log).map_err(StoreError::io(&log))
    }

    pub fn table_exists(&self, table: &str) -> bool {
        self.check_table(table).is_ok()
    }

    pub fn tables(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(StoreError::io(&self.root))? {
            let entry = entry.map_err(StoreError::io(&self.root))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if is_valid_table_name(&name) && entry.path().join(LOG_DIR).is_dir() {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    /// Loads every published commit, probing for entries beyond the cache.
    fn load_commits(&self, table: &str) -> Result<Arc<Vec<Commit>>> {
        self.check_table(table)?;
        let mut cache = self.commits.lock().expect("commit cache poisoned");
        let known = cache.entry(table.to_owned()).or_default();
        loop {
            let next = known.len() as Version + 1;
            let path = self.log_path(table, next);
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => break,
                Err(e) => return Err(StoreError::Io { path, source: e }),
            };
            let commit: Commit = serde_json::from_slice(&bytes)
                .map_err(|source| StoreError::Json { path: path.clone(), source })?;
            if commit.version != next || commit.parent != next - 1 {
                return Err(StoreError::IntegrityError {
                    path,
                    reason: format!(
                        "log entry claims version {} parent {}",
                        commit.version, commit.parent
                    ),
                });
            }
            Arc::make_mut(known).push(commit);
        }
        Ok(known.clone())
    }

    pub fn latest_version(&self, table: &str) -> Result<Version> {
        Ok(self.load_commits(table)?.len() as Version)
    }

    /// Commits in ascending version order.
    pub fn history(&self, table: &str) -> Result<Vec<Commit>> {
        Ok(self.load_commits(table)?.to_vec())
    }

    /// Commits with version greater than `after`.
    pub fn commits_since(&self, table: &str, after: Version) -> Result<Vec<Commit>> {
        let commits = self.load_commits(table)?;
        Ok(commits.iter().skip(after as usize).cloned().collect())
    }

    /// Appends `rows` as version `expected_version + 1`.
    pub fn commit(
        &self,
        table: &str,
        rows: &[Value],
        expected_version: Version,
        op_meta: Value,
    ) -> Result<Version> {
        self.commit_inner(table, rows, expected_version, op_meta, None)
    }

    /// Serializes `rows` and commits them.
    pub fn commit_serialized<T: Serialize>(
        &self,
        table: &str,
        rows: &[T],
        expected_version: Version,
        op_meta: Value,
    ) -> Result<Version> {
        let path = self.table_dir(table);
        let values = rows
            .iter()
            .map(serde_json::to_value)
            .collect::<serde_json::Result<Vec<_>>>()
            .map_err(|source| StoreError::Json { path, source })?;
        self.commit(table, &values, expected_version, op_meta)
    }

    /// Runs the commit sequence and stops dead at `crash`, leaving the
    /// directory exactly as a process killed at that point would.
    pub fn commit_with_crash(
        &self,
        table: &str,
        rows: &[Value],
        expected_version: Version,
        op_meta: Value,
        crash: CrashPoint,
    ) -> Result<Version> {
        self.commit_inner(table, rows, expected_version, op_meta, Some(crash))
    }

    fn commit_inner(
        &self,
        table: &str,
        rows: &[Value],
        expected_version: Version,
        op_meta: Value,
        crash: Option<CrashPoint>,
    ) -> Result<Version> {
        let dir = self.check_table(table)?;
        if rows.is_empty() {
            return Err(StoreError::EmptyCommit);
        }
        let latest = self.latest_version(table)?;
        if latest != expected_version {
            return Err(StoreError::VersionConflict {
                table: table.to_owned(),
                expected: expected_version,
                actual: latest,
            });
        }
        let crash_at = |point: CrashPoint| -> Result<()> {
            if crash == Some(point) {
                Err(StoreError::InjectedCrash(point))
            } else {
                Ok(())
            }
        };

        let bytes = encode_rows(rows);
        let digest = sha256_hex(&bytes);
        let data_name = format!("{digest}.ndjson");
        let data_path = dir.join(&data_name);

        crash_at(CrashPoint::BeforeDataWrite)?;
        if data_path.exists() {
            // identical content was committed before; the file is reused
            let existing = fs::read(&data_path).map_err(StoreError::io(&data_path))?;
            if sha256_hex(&existing) != digest {
                return Err(StoreError::IntegrityError {
                    path: data_path,
                    reason: "existing data file does not match its digest".into(),
                });
            }
            crash_at(CrashPoint::MidDataWrite)?;
            crash_at(CrashPoint::BeforeDataRename)?;
        } else {
            let temp = dir.join(temp_name());
            if crash == Some(CrashPoint::MidDataWrite) {
                write_file(&temp, &bytes[..bytes.len() / 2], false)?;
                return Err(StoreError::InjectedCrash(CrashPoint::MidDataWrite));
            }
            write_file(&temp, &bytes, self.options.fsync)?;
            crash_at(CrashPoint::BeforeDataRename)?;
            fs::rename(&temp, &data_path).map_err(StoreError::io(&data_path))?;
        }

        let version = expected_version + 1;
        let commit = Commit {
            version,
            parent: expected_version,
            files: vec![DataFileRef {
                name: data_name,
                row_count: rows.len() as u64,
                digest,
            }],
            committed_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            op_meta,
        };
        let log_bytes = serde_json::to_vec_pretty(&commit).map_err(|source| StoreError::Json {
            path: dir.clone(),
            source,
        })?;
        let log_dir = dir.join(LOG_DIR);
        let log_temp = log_dir.join(temp_name());
        crash_at(CrashPoint::BeforeLogWrite)?;
        if crash == Some(CrashPoint::MidLogWrite) {
            write_file(&log_temp, &log_bytes[..log_bytes.len() / 2], false)?;
            return Err(StoreError::InjectedCrash(CrashPoint::MidLogWrite));
        }
        write_file(&log_temp, &log_bytes, self.options.fsync)?;
        crash_at(CrashPoint::BeforeLogPublish)?;

        let log_path = self.log_path(table, version);
        match fs::hard_link(&log_temp, &log_path) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                let _ = fs::remove_file(&log_temp);
                return Err(StoreError::VersionConflict {
                    table: table.to_owned(),
                    expected: expected_version,
                    actual: self.latest_version(table)?,
                });
            }
            Err(e) => return Err(StoreError::Io { path: log_path, source: e }),
        }
        if self.options.fsync {
            sync_dir(&log_dir)?;
        }
        crash_at(CrashPoint::BeforeTempCleanup)?;
        fs::remove_file(&log_temp).map_err(StoreError::io(&log_temp))?;
        Ok(version)
    }

    /// Rows as of `version`.
    pub fn read_at(&self, table: &str, version: Version) -> Result<RowSet> {
        let commits = self.load_commits(table)?;
        let latest = commits.len() as Version;
        if version > latest {
            return Err(StoreError::UnknownVersion {
                table: table.to_owned(),
                requested: version,
                latest,
            });
        }
        let mut rows = Vec::new();
        for commit in &commits[..version as usize] {
            rows.extend(self.read_commit_rows(table, commit)?);
        }
        Ok(RowSet { version, rows })
    }

    pub fn read_latest(&self, table: &str) -> Result<RowSet> {
        let latest = self.latest_version(table)?;
        self.read_at(table, latest)
    }

    /// Rows added by one commit, digest-verified.
    pub fn read_commit_rows(&self, table: &str, commit: &Commit) -> Result<Vec<Value>> {
        let mut rows = Vec::new();
        for file in &commit.files {
            rows.extend(self.read_data_file(table, file)?.iter().cloned());
        }
        Ok(rows)
    }

    fn read_data_file(&self, table: &str, file: &DataFileRef) -> Result<Arc<Vec<Value>>> {
        if let Some(rows) = self.files.lock().expect("file cache poisoned").get(&file.digest) {
            return Ok(rows.clone());
        }
        let path = self.table_dir(table).join(&file.name);
        let bytes = fs::read(&path).map_err(StoreError::io(&path))?;
        if sha256_hex(&bytes) != file.digest {
            return Err(StoreError::IntegrityError {
                path,
                reason: "data file does not match its digest".into(),
            });
        }
        let rows = parse_rows(&path, &bytes)?;
        if rows.len() as u64 != file.row_count {
            return Err(StoreError::IntegrityError {
                path,
                reason: format!("expected {} rows, found {}", file.row_count, rows.len()),
            });
        }
        let rows = Arc::new(rows);
        self.files
            .lock()
            .expect("file cache poisoned")
            .insert(file.digest.clone(), rows.clone());
        Ok(rows)
    }
}

pub(crate) fn parse_rows(path: &Path, bytes: &[u8]) -> Result<Vec<Value>> {
    bytes
        .split(|b| *b == b'\n')
        .filter(|line| !line.is_empty())
        .map(|line| {
            serde_json::from_slice(line).map_err(|source| StoreError::Json {
                path: path.to_owned(),
                source,
            })
        })
        .collect()
}

fn temp_name() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    format!(
        "{TEMP_PREFIX}{}-{}-{nanos}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    )
}

fn write_file(path: &Path, bytes: &[u8], fsync: bool) -> Result<()> {
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(StoreError::io(path))?;
    f.write_all(bytes).map_err(StoreError::io(path))?;
    if fsync {
        f.sync_all().map_err(StoreError::io(path))?;
    }
    Ok(())
}

fn sync_dir(dir: &Path) -> Result<()> {
    #[cfg(unix)]
    {
        File::open(dir)
            .and_then(|d| d.sync_all())
            .map_err(StoreError::io(dir))?;
    }
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}
