//! Seeding recipe shared by every stochastic component.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), a counter-based
//! generator whose output is identical on every platform. Independent
//! streams are obtained by mixing a base seed with integer tags through
//! SplitMix64, so a run is fully determined by its base seed and the
//! (epoch, step, instance, ...) coordinates of each draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

/// Default experiment seed.
pub const DEFAULT_SEED: u64 = 1234;

pub fn rng_from_seed(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}
