//! Reproducible random streams.
//!
//! Every play of a game owns one ChaCha8 stream addressed by `(seed, index)`.
//! Streams are derived by key/stream selection rather than by drawing from a
//! parent generator, so the stream for play `i` is the same no matter which
//! thread runs it or in which order plays are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the simulator.
pub type GameRng = ChaCha8Rng;

/// Stream for play number `index` of an experiment seeded with `seed`.
pub fn play_rng(seed: u64, index: u64) -> GameRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent child seed (e.g. one per epsilon in a sweep).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
