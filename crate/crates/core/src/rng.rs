//! Seeded randomness.
//!
//! Every random draw in the toolkit goes through [`Rng`], a 64-bit state
//! PCG (`Pcg64`, XSL-RR 128/64) seeded explicitly by the caller. Nothing
//! reads OS entropy.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = rand_pcg::Pcg64;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream for a sub-task (a class GAN, a retry, ...).
pub fn derive(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(mix(seed, stream))
}

/// Seed of sub-task `stream` under `seed`. A splitmix64 finalizer over the
/// pair keeps nearby (seed, stream) apart.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}
