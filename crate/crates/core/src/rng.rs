//! Deterministic stream derivation.
//!
//! All randomness flows from a single 64-bit seed. Each path gets its own
//! ChaCha stream keyed by `(seed, path_index)`, so an ensemble is a pure
//! function of its parameters no matter how paths are scheduled across
//! worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent generator for one path of one ensemble.
pub fn substream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a task-specific seed from a top-level seed and a label
/// (FNV-1a over the label bytes, folded into the seed).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h
}
