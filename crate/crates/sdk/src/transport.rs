use fieldledger_core::{BatchRequest, BatchResponse};

/// Result of one successful round trip.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub response: BatchResponse,
    /// Bytes of the request body, for throughput estimation.
    pub bytes_sent: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("no connectivity")]
    Offline,
    #[error("request or response lost")]
    Lost,
    #[error("server rejected the whole batch: {0}")]
    BatchRejected(String),
    #[error("server unavailable (status {0})")]
    Unavailable(u16),
    #[error("transport failure: {0}")]
    Other(String),
}

/// Upload channel used by [`crate::Sdk::flush`].
pub trait BatchTransport {
    /// Host-supplied connectivity state. Flushing while offline sends nothing.
    fn is_online(&self) -> bool;

    fn send(&self, request: &BatchRequest, idempotency_key: &str) -> Result<Delivery, TransportError>;
}
