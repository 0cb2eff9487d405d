use std::time::{Duration, Instant};

use fieldledger_core::{ApiError, BatchRequest, BatchResponse};

use crate::transport::{BatchTransport, Delivery, TransportError};

/// Blocking HTTP transport posting to `{base_url}/v1/events:batch`.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            url: format!("{}/v1/events:batch", base_url.trim_end_matches('/')),
            agent,
        }
    }
}

impl BatchTransport for HttpTransport {
    fn is_online(&self) -> bool {
        true
    }

    fn send(&self, request: &BatchRequest, idempotency_key: &str) -> Result<Delivery, TransportError> {
        let body = serde_json::to_vec(request).map_err(|e| TransportError::Other(e.to_string()))?;
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Idempotency-Key", idempotency_key)
            .header("Content-Type", "application/json")
            .send(&body[..])
            .map_err(|e| TransportError::Other(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200 => {
                let response: BatchResponse = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| TransportError::Other(e.to_string()))?;
                Ok(Delivery {
                    response,
                    bytes_sent: body.len() as u64,
                    elapsed_ms: started.elapsed().as_millis() as u64,
                })
            }
            400 => {
                let msg = resp
                    .body_mut()
                    .read_json::<ApiError>()
                    .map(|e| e.message)
                    .unwrap_or_default();
                Err(TransportError::BatchRejected(msg))
            }
            s => Err(TransportError::Unavailable(s)),
        }
    }
}
