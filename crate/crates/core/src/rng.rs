//! Deterministic random stream.
//!
//! Every random draw in the crate goes through [`seeded_rng`], which is
//! ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`) keyed by
//! `SeedableRng::seed_from_u64`. Both the key expansion and the block
//! function are fixed by their crates' stability guarantees, so a seed maps
//! to the same stream on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type DetRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn standard_normal(rng: &mut DetRng) -> f64 {
    StandardNormal.sample(rng)
}

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
