//! Seed derivation. Every random stream is a ChaCha8 generator keyed by the
//! root seed, a domain tag and two indices, so streams never overlap and do
//! not depend on the order in which they are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub(crate) const TAG_FLAGS: u64 = 1;
pub(crate) const TAG_SLOT: u64 = 2;
pub(crate) const TAG_CHANNEL: u64 = 3;
pub(crate) const TAG_MESSAGE: u64 = 4;
pub(crate) const TAG_CONFUSION: u64 = 5;
pub(crate) const TAG_DIRECT: u64 = 6;
pub(crate) const TAG_BATCH: u64 = 7;

/// Child generator for stream `(tag, a, b)` under `root`.
pub fn child_rng(root: u64, tag: u64, a: u64, b: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip([root, tag, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Child seed, for handing a derived root to a nested procedure.
pub fn child_seed(root: u64, tag: u64, a: u64, b: u64) -> u64 {
    use rand::RngCore;
    child_rng(root, tag, a, b).next_u64()
}
