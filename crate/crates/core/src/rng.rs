//! Counter-based random streams.
//!
//! A stream is keyed by `(seed, index)`; drawing sample `i` never depends on
//! how many other samples were drawn before it or on which thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for sampling initial agent positions.
pub const INITIAL_STATE_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
