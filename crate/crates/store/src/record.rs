use serde::{Deserialize, Serialize};
use serde_json::Value;

use fieldledger_core::canonical::canonical_bytes;
use fieldledger_core::sha256_hex;

/// A data file referenced by a commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFileRef {
    /// File name inside the table directory, `<digest>.ndjson`.
    pub name: String,
    pub row_count: u64,
    /// SHA-256 of the file bytes, lowercase hex.
    pub digest: String,
}

/// One published log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub version: u64,
    pub parent: u64,
    pub files: Vec<DataFileRef>,
    /// Server instant of the commit, RFC 3339 UTC.
    pub committed_at: String,
    #[serde(default)]
    pub op_meta: Value,
}

impl Commit {
    pub fn row_count(&self) -> u64 {
        self.files.iter().map(|f| f.row_count).sum()
    }
}

/// Rows of a table as of one version: commit order, then in-file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowSet {
    pub version: u64,
    pub rows: Vec<Value>,
}

impl RowSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Newline-delimited canonical encoding of all rows.
    pub fn to_ndjson(&self) -> Vec<u8> {
        encode_rows(&self.rows)
    }

    /// SHA-256 over [`RowSet::to_ndjson`]; stable for a given version forever.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_ndjson())
    }

    pub fn deserialize<T: serde::de::DeserializeOwned>(&self) -> serde_json::Result<Vec<T>> {
        self.rows.iter().map(|r| T::deserialize(r)).collect()
    }
}

pub(crate) fn encode_rows(rows: &[Value]) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        out.extend_from_slice(&canonical_bytes(row));
        out.push(b'\n');
    }
    out
}
