//! Seed derivation for reproducible parallel work.
//!
//! Every independent unit of work (a split, a k-means restart, a replication)
//! gets its own ChaCha stream derived from a base seed and the unit's index, so
//! results do not depend on the order in which units are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator type used for all derived streams.
pub type StreamRng = ChaCha8Rng;

/// Stream `index` of the family rooted at `seed`.
pub fn derive(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws a fresh base seed from `rng`, for handing to [`derive`].
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.gen()
}
