use std::cell::{Cell, RefCell};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use fieldledger_core::BatchRequest;
use fieldledger_sdk::{BatchTransport, Delivery, HttpTransport, TransportError};

use crate::scenario::{LinkState, Segment};

/// Request-level link model in front of a real HTTP transport.
///
/// Each request is dropped before reaching the server with probability
/// `loss / 2`, and its response is dropped with probability `loss / 2`, so
/// some losses happen after the server has stored the batch. Round-trip time
/// is `rtt + size / bandwidth` on the simulated clock.
pub struct SimTransport<'a> {
    inner: &'a HttpTransport,
    rng: &'a RefCell<ChaCha8Rng>,
    segment: Segment,
    lost: Cell<u64>,
    sent: Cell<u64>,
}

impl<'a> SimTransport<'a> {
    pub fn new(inner: &'a HttpTransport, rng: &'a RefCell<ChaCha8Rng>, segment: Segment) -> Self {
        Self {
            inner,
            rng,
            segment,
            lost: Cell::new(0),
            sent: Cell::new(0),
        }
    }

    /// Requests attempted and requests lost in either direction.
    pub fn counters(&self) -> (u64, u64) {
        (self.sent.get(), self.lost.get())
    }

    fn drop_now(&self) -> bool {
        let p = self.segment.request_loss_prob / 2.0;
        p > 0.0 && self.rng.borrow_mut().random_bool(p.min(1.0))
    }
}

impl BatchTransport for SimTransport<'_> {
    fn is_online(&self) -> bool {
        self.segment.state == LinkState::Online
    }

    fn send(&self, request: &BatchRequest, idempotency_key: &str) -> Result<Delivery, TransportError> {
        if !self.is_online() {
            return Err(TransportError::Offline);
        }
        self.sent.set(self.sent.get() + 1);
        if self.drop_now() {
            self.lost.set(self.lost.get() + 1);
            return Err(TransportError::Lost);
        }
        let mut delivery = self.inner.send(request, idempotency_key)?;
        if self.drop_now() {
            self.lost.set(self.lost.get() + 1);
            return Err(TransportError::Lost);
        }
        let transfer_ms = (delivery.bytes_sent as f64 * 8.0 / self.segment.bandwidth_kbps).ceil() as u64;
        delivery.elapsed_ms = self.segment.rtt_ms + transfer_ms;
        Ok(delivery)
    }
}
