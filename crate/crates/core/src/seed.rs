//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value derived from the master seed and an index path, e.g.
//! `(seed, level, i, j)` for bootstrap replicates. The mixing function is
//! the SplitMix64 finaliser:
//!
//! ```text
//! mix(z):  z ← (z ⊕ (z ≫ 30)) · 0xBF58476D1CE4E5B9
//!          z ← (z ⊕ (z ≫ 27)) · 0x94D049BB133111EB
//!          z ←  z ⊕ (z ≫ 31)
//!
//! derive(master, [p₁ … pₙ]):
//!     h ← mix(master + γ)
//!     for each pᵢ:  h ← mix(h ⊕ mix(pᵢ + (i+1)·γ))      γ = 0x9E3779B97F4A7C15
//! ```
//!
//! Streams depend only on the path, never on scheduling, so parallel runs
//! replay bit-identically for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = mix64(master.wrapping_add(GAMMA));
    for (i, &p) in path.iter().enumerate() {
        let salt = GAMMA.wrapping_mul(i as u64 + 1);
        h = mix64(h ^ mix64(p.wrapping_add(salt)));
    }
    h
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derivation_is_stable() {
        // Pinned so that files produced by earlier builds replay.
        assert_eq!(mix64(0), 0);
        assert_eq!(derive_seed(42, &[1, 2, 3]), derive_seed(42, &[1, 2, 3]));
        assert_eq!(derive_seed(0, &[]), mix64(GAMMA));
    }

    #[test]
    fn paths_do_not_collide_on_small_grids() {
        let mut seen = HashSet::new();
        for level in 0..3 {
            for i in 0..50 {
                for j in 0..50 {
                    assert!(seen.insert(derive_seed(7, &[level, i, j])));
                }
            }
        }
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[0]), derive_seed(7, &[0, 0]));
    }
}
