//! Seeded random streams.
//!
//! Every randomized operation takes an explicit stream. Independent streams are
//! derived from one master seed by ChaCha's 64-bit stream counter, so the
//! mapping `(seed, label, index) → stream` is fixed and platform-independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// The stream for replication `index` of the experiment tagged `label`.
/// `label` occupies the high 24 bits of the stream id, `index` the low 40.
pub fn stream(master_seed: u64, label: u64, index: u64) -> Stream {
    debug_assert!(index < 1 << 40, "replication index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((label & 0xFF_FFFF) << 40) | (index & ((1 << 40) - 1)));
    rng
}

/// A single stream from a seed.
pub fn from_seed(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}
