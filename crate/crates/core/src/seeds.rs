//! Deterministic seed derivation for parallel and nested random draws.
//!
//! Every random quantity in the crate is keyed by an explicit 64-bit seed
//! plus a path of integer tags (link id, element index, trial index, ...).
//! Derivation is a SplitMix64 chain, so workers obtain disjoint streams
//! without sharing mutable state, and a draw keyed by the same path is
//! bit-identical regardless of evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step: mixes `x` into a well-distributed 64-bit value.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a tag path.
///
/// Distinct paths give (with overwhelming probability) distinct streams;
/// the same path always gives the same seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0x6a09_e667_f3bc_c909);
    for &tag in path {
        s = splitmix64(s ^ splitmix64(tag.wrapping_add(0x243f_6a88_85a3_08d3)));
    }
    s
}

/// Counter-based generator for the derived stream.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
