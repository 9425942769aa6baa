//! Seeded random streams.
//!
//! Every Monte-Carlo consumer draws from `(seed, stream_id)` pairs so work
//! can be split into blocks without changing any sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
