//! Seed derivation shared by every randomized stage.
//!
//! All randomness flows from one master seed. Child seeds are derived with a
//! SplitMix64 mix of `(parent, stream)` so that sibling streams are
//! decorrelated and the whole run stays a pure function of the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named streams, so that e.g. the fold shuffle and the balancing draw of the
/// same repeat never share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Folds = 1,
    Balance = 2,
    Model = 3,
    Repeat = 4,
    Synthetic = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` for the given stream and index.
pub fn derive(parent: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ (stream as u64).rotate_left(32)) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
