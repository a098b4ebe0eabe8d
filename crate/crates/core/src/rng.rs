//! Seeding helpers. All randomness in the crate flows through an explicitly
//! seeded [`ChaCha8Rng`], which is reproducible across platforms.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for a given seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one Monte-Carlo trial, derived from the master seed and the
/// trial's position in a sweep. Stable across releases.
pub fn derive_seed(master: u64, grid_index: u64, trial_index: u64) -> u64 {
    let h = mix64(master);
    let h = mix64(h ^ grid_index.wrapping_mul(0xd6e8_feb8_6659_fd93));
    mix64(h ^ trial_index.wrapping_mul(0xa076_1d64_78bd_642f))
}
