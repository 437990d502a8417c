//! Reproducible random streams.
//!
//! All randomness in the crate flows from a counter-based generator keyed by
//! `(seed, stream)`. Replicas use their index as the stream id, so runs are
//! reproducible regardless of how work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// The generator for a given `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
