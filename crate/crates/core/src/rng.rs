//! Reproducible random streams keyed by `(seed, stream)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies an independent random stream, e.g. `(run seed, frame id)`.
///
/// ChaCha is counter based, so streams with the same seed and different ids
/// never overlap and can be consumed on different threads in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
}

impl RngKey {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives a sub-key for a named purpose within the same stream.
    pub const fn purpose(self, tag: u64) -> Self {
        Self {
            seed: self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            stream: self.stream,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
