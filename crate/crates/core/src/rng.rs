//! Seeding helpers.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose
//! seed is derived from a base seed and an integer index, so draw `m` of an
//! experiment can be regenerated without replaying draws `0..m`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(
        base.wrapping_add(GOLDEN_GAMMA)
            .wrapping_add(mix64(index ^ 0x5851_F42D_4C95_7F2D)),
    )
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_stream(base: u64, index: u64) -> StreamRng {
    stream(derive_seed(base, index))
}
