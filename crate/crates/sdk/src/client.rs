use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, FixedOffset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fieldledger_core::{
    format_client_ts, normalize_location, validate_event, BatchRequest, Catalog, ConnectivityInfo,
    EventEnvelope, EventKind, EventStatus, GeoPoint, Payload, UlidGenerator, ValidationOutcome,
};

use crate::backoff::Backoff;
use crate::queue::{DurableQueue, QueueError, DEFAULT_CAPACITY};
use crate::speed::SpeedEstimator;
use crate::transport::{BatchTransport, TransportError};

#[derive(Debug, Clone)]
pub struct SdkConfig {
    pub app_id: String,
    pub device_id: String,
    pub sdk_version: String,
    pub capacity: usize,
    pub batch_limit: usize,
    pub max_batch_bytes: usize,
    /// Device clock offset from UTC, rendered into `client_ts`.
    pub utc_offset_minutes: i32,
    /// Seeds id minting and backoff jitter. `None` draws from the OS.
    pub seed: Option<u64>,
    pub fsync: bool,
}

impl SdkConfig {
    pub fn new(app_id: impl Into<String>, device_id: impl Into<String>) -> Self {
        Self {
            app_id: app_id.into(),
            device_id: device_id.into(),
            sdk_version: env!("CARGO_PKG_VERSION").to_owned(),
            capacity: DEFAULT_CAPACITY,
            batch_limit: 100,
            max_batch_bytes: 512 * 1024,
            utc_offset_minutes: 0,
            seed: None,
            fsync: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SdkError {
    #[error("queue is full ({capacity} entries)")]
    QueueFull { capacity: usize },
    #[error("event failed local validation")]
    LocalValidationFailed(ValidationOutcome),
    #[error("location out of range")]
    LocationOutOfRange,
    #[error("timestamp out of range: {0}")]
    TimestampOutOfRange(i64),
    #[error(transparent)]
    Queue(QueueError),
}

impl From<QueueError> for SdkError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::Full { capacity } => SdkError::QueueFull { capacity },
            other => SdkError::Queue(other),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushReport {
    pub attempted: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub retained: usize,
    pub requests: usize,
    /// Set when the last request failed in transport.
    pub next_retry_after_ms: Option<u64>,
    /// Round-trip time of each request, in order.
    pub request_latencies_ms: Vec<u64>,
    /// True when another flush was already running and this one did nothing.
    pub skipped: bool,
}

struct FlushGuard<'a>(&'a AtomicBool);

impl Drop for FlushGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

struct RetryState {
    backoff: Backoff,
    retry_at_ms: Option<i64>,
}

pub struct Sdk {
    config: SdkConfig,
    catalog: Catalog,
    queue: Mutex<DurableQueue>,
    ids: Mutex<UlidGenerator<ChaCha8Rng>>,
    speed: Mutex<SpeedEstimator>,
    retry: Mutex<RetryState>,
    flushing: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Sdk {
    /// Opens the SDK over a queue file, restoring any events left from a
    /// previous process.
    pub fn open(config: SdkConfig, catalog: Catalog, queue_path: impl AsRef<Path>) -> Result<Self, SdkError> {
        let mut queue = DurableQueue::open(queue_path, config.capacity)?;
        queue.set_fsync(config.fsync);
        let seed = config.seed.unwrap_or_else(rand::random);
        Ok(Self {
            catalog,
            queue: Mutex::new(queue),
            ids: Mutex::new(UlidGenerator::new(ChaCha8Rng::seed_from_u64(seed))),
            speed: Mutex::new(SpeedEstimator::default()),
            retry: Mutex::new(RetryState {
                backoff: Backoff::new(seed ^ 0x9e37_79b9_7f4a_7c15),
                retry_at_ms: None,
            }),
            flushing: AtomicBool::new(false),
            config,
        })
    }

    pub fn config(&self) -> &SdkConfig {
        &self.config
    }

    pub fn queue_len(&self) -> usize {
        lock(&self.queue).len()
    }

    pub fn truncation_warnings(&self) -> u64 {
        lock(&self.queue).truncation_warnings()
    }

    pub fn queued(&self) -> Vec<EventEnvelope> {
        lock(&self.queue).iter().cloned().collect()
    }

    pub fn speed(&self) -> SpeedEstimator {
        *lock(&self.speed)
    }

    fn device_time(&self, now_ms: i64) -> Result<DateTime<FixedOffset>, SdkError> {
        let offset = FixedOffset::east_opt(self.config.utc_offset_minutes * 60)
            .unwrap_or_else(|| FixedOffset::east_opt(0).unwrap());
        DateTime::from_timestamp_millis(now_ms)
            .map(|t| t.with_timezone(&offset))
            .ok_or(SdkError::TimestampOutOfRange(now_ms))
    }

    pub fn log_event(
        &self,
        kind: EventKind,
        payload: Payload,
        user_id: &str,
        now_ms: i64,
        connectivity: ConnectivityInfo,
    ) -> Result<EventEnvelope, SdkError> {
        self.log_event_at(kind, payload, user_id, now_ms, connectivity, None)
    }

    /// Like [`Sdk::log_event`], with a device location attached.
    pub fn log_event_at(
        &self,
        kind: EventKind,
        payload: Payload,
        user_id: &str,
        now_ms: i64,
        mut connectivity: ConnectivityInfo,
        location: Option<GeoPoint>,
    ) -> Result<EventEnvelope, SdkError> {
        let location = match location {
            Some(p) => Some(normalize_location(p.lat, p.lon).map_err(|_| SdkError::LocationOutOfRange)?),
            None => None,
        };
        if connectivity.online && connectivity.speed_kbps.is_none() {
            connectivity.speed_kbps = lock(&self.speed).ewma_kbps();
        }
        let client_ts = format_client_ts(&self.device_time(now_ms)?);
        let schema_version = self.catalog.latest(kind).map(|d| d.version).unwrap_or(1);

        let mut queue = lock(&self.queue);
        if queue.len() >= queue.capacity() {
            return Err(SdkError::QueueFull { capacity: queue.capacity() });
        }
        let envelope = EventEnvelope {
            event_id: lock(&self.ids).generate_string(now_ms.max(0) as u64),
            user_id: user_id.to_owned(),
            kind: kind.as_str().to_owned(),
            client_ts,
            adjusted_ts: None,
            location,
            connectivity,
            sdk_version: self.config.sdk_version.clone(),
            schema_version,
            payload,
        };
        let outcome = validate_event(&envelope, &self.catalog);
        if !outcome.is_accepted() {
            return Err(SdkError::LocalValidationFailed(outcome));
        }
        queue.push(envelope.clone())?;
        Ok(envelope)
    }

    /// Uploads queued events in FIFO batches until the queue is empty or a
    /// request fails. Honors the backoff schedule of earlier failures.
    pub fn flush(&self, transport: &dyn BatchTransport, now_ms: i64) -> Result<FlushReport, SdkError> {
        if self.flushing.swap(true, Ordering::AcqRel) {
            return Ok(FlushReport {
                skipped: true,
                retained: self.queue_len(),
                ..Default::default()
            });
        }
        let _guard = FlushGuard(&self.flushing);
        let mut report = FlushReport::default();

        if !transport.is_online() {
            report.retained = self.queue_len();
            return Ok(report);
        }
        if let Some(at) = lock(&self.retry).retry_at_ms {
            if now_ms < at {
                report.retained = self.queue_len();
                report.next_retry_after_ms = Some((at - now_ms) as u64);
                return Ok(report);
            }
        }

        loop {
            let batch = lock(&self.queue).front_batch(self.config.batch_limit, self.config.max_batch_bytes);
            if batch.is_empty() {
                break;
            }
            let n = batch.len();
            let batch_id = lock(&self.ids).generate_string(now_ms.max(0) as u64);
            let request = BatchRequest {
                batch_id: batch_id.clone(),
                app_id: self.config.app_id.clone(),
                device_id: self.config.device_id.clone(),
                sent_ts: format_client_ts(&self.device_time(now_ms)?),
                events: batch,
            };
            report.attempted += n;
            report.requests += 1;

            let outcome = transport.send(&request, &batch_id).and_then(|d| {
                let matches = d.response.results.len() == n
                    && d.response
                        .results
                        .iter()
                        .zip(&request.events)
                        .all(|(r, e)| r.event_id == e.event_id);
                if matches {
                    Ok(d)
                } else {
                    Err(TransportError::Other("response does not match request".into()))
                }
            });
            match outcome {
                Ok(delivery) => {
                    report.accepted += delivery.response.count(EventStatus::Accepted);
                    report.duplicates += delivery.response.count(EventStatus::Duplicate);
                    report.rejected += delivery.response.count(EventStatus::Rejected);
                    report.request_latencies_ms.push(delivery.elapsed_ms);
                    lock(&self.speed).observe_transfer(delivery.bytes_sent, delivery.elapsed_ms);
                    lock(&self.queue).remove_front(n)?;
                    let mut retry = lock(&self.retry);
                    retry.backoff.reset();
                    retry.retry_at_ms = None;
                }
                Err(TransportError::BatchRejected(_)) => {
                    // The server refused the batch as a whole; resending it
                    // unchanged can never succeed.
                    report.rejected += n;
                    lock(&self.queue).remove_front(n)?;
                }
                Err(_) => {
                    let mut retry = lock(&self.retry);
                    let delay = retry.backoff.next_delay_ms();
                    retry.retry_at_ms = Some(now_ms + delay as i64);
                    report.next_retry_after_ms = Some(delay);
                    break;
                }
            }
        }
        report.retained = self.queue_len();
        Ok(report)
    }
}
