//! Seeding helpers. Every random draw in the crate goes through a ChaCha8
//! generator built here, so results depend only on (seed, stream).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the independent uses of one seed.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_NOISE: u64 = 1;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Seed of trial `i`. Trial 0 keeps the base seed.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
