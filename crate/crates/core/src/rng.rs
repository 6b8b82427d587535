//! Seed derivation and deterministic RNG construction.
//!
//! Every stochastic component takes its own substream derived from
//! `(root seed, tag)` so that enabling or disabling one component never
//! shifts the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0001_0000_01b3;

/// Mix a root seed with a tag string into an independent substream seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = FNV_OFFSET_BASIS ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche (splitmix64 tail)
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Mix a root seed with a tag and an index (clip id, epoch, batch item).
pub fn derive_seed_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    derive_seed(derive_seed(seed, tag) ^ index.wrapping_mul(0xd134_2543_de82_ef95), "idx")
}

/// Deterministic generator for a `(seed, tag)` substream.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}

/// Deterministic generator for a `(seed, tag, index)` substream.
pub fn stream_indexed(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed_indexed(seed, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_independent_of_each_other() {
        let mut a = stream(7, "background");
        let mut b = stream(7, "fish");
        let xa: u64 = a.gen();
        let xb: u64 = b.gen();
        assert_ne!(xa, xb);
        // re-deriving reproduces the stream exactly
        let mut a2 = stream(7, "background");
        assert_eq!(xa, a2.gen::<u64>());
    }

    #[test]
    fn indexed_streams_differ_per_index() {
        let mut s0 = stream_indexed(7, "clip", 0);
        let mut s1 = stream_indexed(7, "clip", 1);
        assert_ne!(s0.gen::<u64>(), s1.gen::<u64>());
    }
}
