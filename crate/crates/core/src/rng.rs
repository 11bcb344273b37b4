//! Deterministic random streams.
//!
//! All randomness flows from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded via
//! `seed_from_u64`. ChaCha output is specified independently of platform and
//! word size, so the same seed yields the same stream everywhere.
//! Independent work units (audit samples, training seeds) derive their own
//! seed with [`derive_seed`] so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EstRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> EstRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finaliser over `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
