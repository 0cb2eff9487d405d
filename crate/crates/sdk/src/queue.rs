//! Durable FIFO of event envelopes.
//!
//! File layout: the 4-byte magic `FLQ1`, then records of
//! `[u32 len LE][u32 crc32c LE][canonical envelope bytes]`. Appends go to the
//! end of the file; removals from the front rewrite the file through a temp
//! file and rename.

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use fieldledger_core::{canonical_serialize, EventEnvelope};

pub const HEADER: &[u8; 4] = b"FLQ1";
pub const DEFAULT_CAPACITY: usize = 100_000;
const RECORD_PREFIX: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum QueueError {
    #[error("queue is full ({capacity} entries)")]
    Full { capacity: usize },
    #[error("queue file {path} has an unreadable header")]
    StorageCorrupt { path: PathBuf },
    #[error("queue i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

struct Entry {
    envelope: EventEnvelope,
    encoded_len: usize,
}

pub struct DurableQueue {
    path: PathBuf,
    capacity: usize,
    entries: VecDeque<Entry>,
    file: File,
    truncation_warnings: u64,
    fsync: bool,
}

impl std::fmt::Debug for DurableQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DurableQueue")
            .field("path", &self.path)
            .field("len", &self.entries.len())
            .field("capacity", &self.capacity)
            .finish()
    }
}

fn encode_record(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(RECORD_PREFIX + bytes.len());
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32c::crc32c(bytes).to_le_bytes());
    out.extend_from_slice(bytes);
    out
}

/// Decodes as many whole records as possible. Returns the envelopes and the
/// byte offset just past the last good record.
fn decode_records(data: &[u8]) -> (Vec<Entry>, usize) {
    let mut entries = Vec::new();
    let mut pos = HEADER.len();
    while data.len() - pos >= RECORD_PREFIX {
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(data[pos + 4..pos + 8].try_into().unwrap());
        let start = pos + RECORD_PREFIX;
        if data.len() - start < len {
            break;
        }
        let body = &data[start..start + len];
        if crc32c::crc32c(body) != crc {
            break;
        }
        let Ok(envelope) = serde_json::from_slice::<EventEnvelope>(body) else {
            break;
        };
        entries.push(Entry {
            envelope,
            encoded_len: RECORD_PREFIX + len,
        });
        pos = start + len;
    }
    (entries, pos)
}

impl DurableQueue {
    /// Opens the queue at `path`, creating it if absent, and replays its
    /// records. A torn or corrupt tail is cut off and counted as a warning.
    pub fn open(path: impl AsRef<Path>, capacity: usize) -> Result<Self, QueueError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| QueueError::Io { path: path.clone(), source };
        let data = match fs::read(&path) {
            Ok(d) => d,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let mut warnings = 0;
        let (entries, good_len) = if data.len() < HEADER.len() {
            if !HEADER.starts_with(&data) {
                return Err(QueueError::StorageCorrupt { path });
            }
            if !data.is_empty() {
                warnings += 1;
            }
            (Vec::new(), 0)
        } else {
            if &data[..HEADER.len()] != HEADER {
                return Err(QueueError::StorageCorrupt { path });
            }
            let (entries, good) = decode_records(&data);
            if good < data.len() {
                warnings += 1;
            }
            (entries, good)
        };

        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        if good_len == 0 {
            file.set_len(0).map_err(io_err)?;
            file.write_all(HEADER).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        } else if good_len < data.len() {
            file.set_len(good_len as u64).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        Ok(Self {
            path,
            capacity,
            entries: entries.into(),
            file,
            truncation_warnings: warnings,
            fsync: true,
        })
    }

    /// Skips fsync on append and rewrite. For simulations only.
    pub fn set_fsync(&mut self, fsync: bool) {
        self.fsync = fsync;
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn truncation_warnings(&self) -> u64 {
        self.truncation_warnings
    }

    pub fn push(&mut self, envelope: EventEnvelope) -> Result<(), QueueError> {
        if self.entries.len() >= self.capacity {
            return Err(QueueError::Full { capacity: self.capacity });
        }
        let record = encode_record(&canonical_serialize(&envelope));
        let io_err = |source| QueueError::Io { path: self.path.clone(), source };
        self.file.write_all(&record).map_err(io_err)?;
        if self.fsync {
            self.file.sync_data().map_err(io_err)?;
        }
        self.entries.push_back(Entry {
            envelope,
            encoded_len: record.len(),
        });
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &EventEnvelope> {
        self.entries.iter().map(|e| &e.envelope)
    }

    /// Leading entries up to `max_events` and `max_bytes` of encoded size.
    /// At least one entry is returned when the queue is non-empty.
    pub fn front_batch(&self, max_events: usize, max_bytes: usize) -> Vec<EventEnvelope> {
        let mut out = Vec::new();
        let mut bytes = 0;
        for e in self.entries.iter().take(max_events) {
            if !out.is_empty() && bytes + e.encoded_len > max_bytes {
                break;
            }
            bytes += e.encoded_len;
            out.push(e.envelope.clone());
        }
        out
    }

    /// Drops the first `n` entries and persists the shortened queue.
    pub fn remove_front(&mut self, n: usize) -> Result<(), QueueError> {
        let n = n.min(self.entries.len());
        if n == 0 {
            return Ok(());
        }
        self.entries.drain(..n);
        self.rewrite()
    }

    fn rewrite(&mut self) -> Result<(), QueueError> {
        let io_err = |source| QueueError::Io { path: self.path.clone(), source };
        let tmp = self.path.with_extension("rewrite.tmp");
        let mut buf = HEADER.to_vec();
        for e in &self.entries {
            buf.extend_from_slice(&encode_record(&canonical_serialize(&e.envelope)));
        }
        {
            let mut f = File::create(&tmp).map_err(io_err)?;
            f.write_all(&buf).map_err(io_err)?;
            if self.fsync {
                f.sync_all().map_err(io_err)?;
            }
        }
        fs::rename(&tmp, &self.path).map_err(io_err)?;
        self.file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        Ok(())
    }

    /// Raw bytes of the backing file.
    pub fn read_file(&self) -> Result<Vec<u8>, QueueError> {
        let mut f = File::open(&self.path).map_err(|source| QueueError::Io {
            path: self.path.clone(),
            source,
        })?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf).map_err(|source| QueueError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(buf)
    }
}
