//! Client library for logging labeled events on a device that is often
//! offline. Events are validated locally, persisted to a durable queue and
//! uploaded in batches whenever the host reports connectivity.

mod backoff;
mod client;
mod http;
mod queue;
mod speed;
mod transport;

pub use backoff::Backoff;
pub use client::{FlushReport, Sdk, SdkConfig, SdkError};
pub use http::HttpTransport;
pub use queue::{DurableQueue, QueueError, DEFAULT_CAPACITY, HEADER};
pub use speed::SpeedEstimator;
pub use transport::{BatchTransport, Delivery, TransportError};
