use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use serde::Serialize;

use fieldledger_core::sha256_hex;

use crate::error::{Result, StoreError};
use crate::record::Commit;
use crate::store::{parse_rows, Store, Version, LOG_DIR, TEMP_PREFIX};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorruptFile {
    pub name: String,
    pub reason: String,
    /// Versions whose commits reference the file.
    pub versions: Vec<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntegrityReport {
    pub table: String,
    pub latest: Version,
    pub corrupt_files: Vec<CorruptFile>,
    pub log_problems: Vec<String>,
    /// Unreferenced data files and leftover temp files; harmless to readers.
    pub orphans: Vec<String>,
}

impl IntegrityReport {
    /// Orphans do not make a table unclean.
    pub fn is_clean(&self) -> bool {
        self.corrupt_files.is_empty() && self.log_problems.is_empty()
    }
}

impl Store {
    /// Re-reads the log and every referenced file from disk, bypassing caches.
    pub fn verify(&self, table: &str) -> Result<IntegrityReport> {
        if !self.table_exists(table) {
            return Err(StoreError::UnknownTable(table.to_owned()));
        }
        let dir = self.table_dir(table);
        let log_dir = dir.join(LOG_DIR);
        let mut report = IntegrityReport {
            table: table.to_owned(),
            latest: 0,
            corrupt_files: Vec::new(),
            log_problems: Vec::new(),
            orphans: Vec::new(),
        };

        let mut entries = BTreeMap::new();
        for entry in fs::read_dir(&log_dir).map_err(StoreError::io(&log_dir))? {
            let entry = entry.map_err(StoreError::io(&log_dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with(TEMP_PREFIX) {
                report.orphans.push(format!("{LOG_DIR}/{name}"));
                continue;
            }
            match name.strip_suffix(".json").and_then(|n| n.parse::<Version>().ok()) {
                Some(v) if name.len() == 13 => {
                    entries.insert(v, entry.path());
                }
                _ => report.log_problems.push(format!("unexpected log file {name}")),
            }
        }

        let mut commits: Vec<Commit> = Vec::new();
        for (expected, (version, path)) in (1..).zip(&entries) {
            if *version != expected {
                report
                    .log_problems
                    .push(format!("gap in log: expected version {expected}, found {version}"));
                break;
            }
            let commit = fs::read(path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<Commit>(&b).map_err(|e| e.to_string()));
            match commit {
                Ok(c) if c.version == *version && c.parent == version - 1 => commits.push(c),
                Ok(c) => {
                    report.log_problems.push(format!(
                        "log entry {version} claims version {} parent {}",
                        c.version, c.parent
                    ));
                    break;
                }
                Err(e) => {
                    report.log_problems.push(format!("log entry {version} unreadable: {e}"));
                    break;
                }
            }
        }
        report.latest = commits.len() as Version;

        let mut referenced: BTreeMap<String, (String, u64, Vec<Version>)> = BTreeMap::new();
        for c in &commits {
            for f in &c.files {
                referenced
                    .entry(f.name.clone())
                    .or_insert_with(|| (f.digest.clone(), f.row_count, Vec::new()))
                    .2
                    .push(c.version);
            }
        }
        for (name, (digest, row_count, versions)) in &referenced {
            let path = dir.join(name);
            let reason = match fs::read(&path) {
                Err(e) => Some(format!("unreadable: {e}")),
                Ok(bytes) if sha256_hex(&bytes) != *digest => {
                    Some("content does not match digest".to_owned())
                }
                Ok(bytes) => match parse_rows(&path, &bytes) {
                    Ok(rows) if rows.len() as u64 == *row_count => None,
                    Ok(rows) => Some(format!("expected {row_count} rows, found {}", rows.len())),
                    Err(e) => Some(e.to_string()),
                },
            };
            if let Some(reason) = reason {
                report.corrupt_files.push(CorruptFile {
                    name: name.clone(),
                    reason,
                    versions: versions.clone(),
                });
            }
        }

        let referenced: BTreeSet<_> = referenced.into_keys().collect();
        for entry in fs::read_dir(&dir).map_err(StoreError::io(&dir))? {
            let entry = entry.map_err(StoreError::io(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == LOG_DIR {
                continue;
            }
            if !referenced.contains(&name) {
                report.orphans.push(name);
            }
        }
        report.orphans.sort();
        Ok(report)
    }

    /// Deletes the orphans listed by [`Store::verify`]. Must not run while a
    /// writer is mid-commit on the same table.
    pub fn gc_orphans(&self, table: &str) -> Result<Vec<String>> {
        let report = self.verify(table)?;
        let dir = self.table_dir(table);
        for name in &report.orphans {
            let path = dir.join(name);
            fs::remove_file(&path).map_err(StoreError::io(&path))?;
        }
        Ok(report.orphans)
    }
}
