//! Deterministic random streams derived from one root seed.
//!
//! Every chain, iteration and importance-sampling trajectory gets its own
//! ChaCha stream keyed by a path of integers, so results do not depend on the
//! order in which independent pieces of work are executed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a path of indices into a 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(root), |acc, p| splitmix(acc ^ splitmix(*p)))
}

pub fn stream(root: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, path))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Draws one child seed per independent sub-task.
pub fn child_seeds<R: Rng + ?Sized>(rng: &mut R, count: usize) -> alloc::vec::Vec<u64> {
    (0..count).map(|_| rng.random::<u64>()).collect()
}
