//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 seeded with a `u64`.
//! Sub-streams (per replicate, per subset) get their seed from
//! [`derive_seed`]: one SplitMix64 round over `master ^ (index * golden)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in output provenance.
pub const RNG_NAME: &str = "chacha8";

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the `index`-th sub-stream of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = seeded(derive_seed(7, 0)).random();
        let b: u64 = seeded(derive_seed(7, 0)).random();
        let c: u64 = seeded(derive_seed(7, 1)).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
