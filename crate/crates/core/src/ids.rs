//! ULID minting and syntax checks.

use rand::RngCore;
use ulid::Ulid;

const CROCKFORD: &[u8] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";
const RANDOM_MASK: u128 = (1u128 << 80) - 1;

/// True when `s` is a canonical ULID: 26 uppercase Crockford base32 characters
/// whose leading character keeps the value within 128 bits.
pub fn is_valid_ulid(s: &str) -> bool {
    let bytes = s.as_bytes();
    bytes.len() == 26
        && bytes[0] <= b'7'
        && bytes.iter().all(|b| CROCKFORD.contains(b))
}

/// Monotonic ULID source.
///
/// Within one generator, identifiers sort in creation order even when several
/// are minted in the same millisecond or the supplied clock steps backwards:
/// the previous timestamp is kept and the random part incremented.
#[derive(Debug)]
pub struct UlidGenerator<R> {
    rng: R,
    last: Option<(u64, u128)>,
}

impl<R: RngCore> UlidGenerator<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, last: None }
    }

    pub fn generate(&mut self, epoch_ms: u64) -> Ulid {
        let (ms, random) = match self.last {
            Some((last_ms, last_random)) if epoch_ms <= last_ms => {
                if last_random == RANDOM_MASK {
                    // random part exhausted for this millisecond; borrow the next one
                    (last_ms + 1, self.fresh_random())
                } else {
                    (last_ms, last_random + 1)
                }
            }
            _ => (epoch_ms, self.fresh_random()),
        };
        self.last = Some((ms, random));
        Ulid::from_parts(ms, random)
    }

    pub fn generate_string(&mut self, epoch_ms: u64) -> String {
        self.generate(epoch_ms).to_string()
    }

    fn fresh_random(&mut self) -> u128 {
        let hi = u128::from(self.rng.next_u64());
        let lo = u128::from(self.rng.next_u64());
        // leave headroom so increments inside one millisecond rarely overflow
        ((hi << 64 | lo) & RANDOM_MASK) >> 1
    }
}
