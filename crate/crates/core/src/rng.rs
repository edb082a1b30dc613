//! Deterministic per-index random streams for parallel batches.
//!
//! Every particle or orbit `i` of a run with seed `s` draws from ChaCha8
//! keyed by `s` on stream `i`, so results do not depend on thread count or
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
