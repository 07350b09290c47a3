//! Seed derivation for reproducible substreams.
//!
//! Every random decision in the crate is drawn from a ChaCha8 stream whose seed
//! is derived from a master seed and a path of integer tags (column index, leaf
//! id, tree index, ...). Substreams are independent of evaluation order, so
//! parallel and sequential execution give identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and `tag`.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix(mix(parent.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ mix(tag.wrapping_mul(0xd1b5_4a32_d192_ed03).wrapping_add(1)))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(parent: u64, tag: u64) -> ChaCha8Rng {
    stream(derive_seed(parent, tag))
}
