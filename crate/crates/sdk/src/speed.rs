use serde::{Deserialize, Serialize};

/// Connection speed estimate from observed upload throughput.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimator {
    ewma_kbps: Option<f64>,
    alpha: f64,
}

impl Default for SpeedEstimator {
    fn default() -> Self {
        Self::new(0.3)
    }
}

impl SpeedEstimator {
    /// # Panics
    /// If `alpha` is outside (0, 1].
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
        Self { ewma_kbps: None, alpha }
    }

    pub fn ewma_kbps(&self) -> Option<f64> {
        self.ewma_kbps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Zero-duration samples carry no rate information and are ignored.
    pub fn observe_transfer(&mut self, bytes: u64, duration_ms: u64) -> &mut Self {
        if duration_ms == 0 {
            return self;
        }
        let sample = bytes as f64 * 8.0 / duration_ms as f64;
        self.ewma_kbps = Some(match self.ewma_kbps {
            None => sample,
            Some(prev) => self.alpha * sample + (1.0 - self.alpha) * prev,
        });
        self
    }
}
