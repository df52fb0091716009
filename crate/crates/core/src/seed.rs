//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value derived from the run seed with [`mix`]. The derivation is
//! part of the public contract: changing it changes every published result.
//!
//! `mix(seed, i) = splitmix64(seed ^ rotl(splitmix64(i), 17))`, where
//! `splitmix64` is the finalizer of Steele, Lea and Flood's SplitMix64
//! generator (golden-ratio increment followed by two xor-shift-multiply
//! rounds).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `z + golden`.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream index.
pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index).rotate_left(17))
}

/// Folds a path of indices into the seed, e.g. `(repeat, fold)`.
pub fn mix_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| mix(s, i))
}

/// Seed for a set of variable indices; the set must already be sorted.
pub fn mix_set(seed: u64, sorted: &[usize]) -> u64 {
    let mut s = mix(seed, sorted.len() as u64);
    for &v in sorted {
        s = mix(s, v as u64);
    }
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
