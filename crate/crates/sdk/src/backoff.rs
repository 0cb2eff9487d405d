use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Exponential retry schedule with multiplicative jitter.
///
/// Once the un-jittered delay reaches the cap, the cap itself is returned so
/// delays never decrease across consecutive failures.
#[derive(Debug, Clone)]
pub struct Backoff {
    base_ms: u64,
    cap_ms: u64,
    jitter: f64,
    failures: u32,
    rng: ChaCha8Rng,
}

impl Backoff {
    pub fn new(seed: u64) -> Self {
        Self::with_params(1000, 300_000, 0.2, seed)
    }

    pub fn with_params(base_ms: u64, cap_ms: u64, jitter: f64, seed: u64) -> Self {
        Self {
            base_ms,
            cap_ms,
            jitter,
            failures: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn consecutive_failures(&self) -> u32 {
        self.failures
    }

    pub fn reset(&mut self) {
        self.failures = 0;
    }

    /// Records a failure and returns the delay before the next attempt.
    pub fn next_delay_ms(&mut self) -> u64 {
        let exp = self.failures.min(32);
        self.failures = self.failures.saturating_add(1);
        let nominal = self.base_ms.saturating_mul(1u64 << exp);
        if nominal >= self.cap_ms {
            return self.cap_ms;
        }
        let factor = 1.0 + self.rng.random_range(-self.jitter..=self.jitter);
        ((nominal as f64 * factor).round() as u64).min(self.cap_ms)
    }
}
