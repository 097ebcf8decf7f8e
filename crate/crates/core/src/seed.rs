//! Reproducible random streams.
//!
//! Every randomized component draws from [`StreamRng`] (ChaCha with 8 rounds, `rand_chacha` 0.3),
//! whose output for a given seed is fixed across platforms and releases. Independent streams
//! are derived from one root seed with [`split`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::fmix64;

pub type StreamRng = ChaCha8Rng;

/// Seed of the `index`-th child stream of `root`:
/// `fmix64(root ^ fmix64(index + 0x9e3779b97f4a7c15))`.
pub fn split(root: u64, index: u64) -> u64 {
    fmix64(root ^ fmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn child_stream(root: u64, index: u64) -> StreamRng {
    stream(split(root, index))
}

/// Uniform draw from `[0, n)` by rejection on the top bits; `n >= 1`.
///
/// Implemented here rather than through `Rng::gen_range` so that the consumed words, and hence
/// every shuffle, stay pinned to this definition.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n >= 1);
    if n.is_power_of_two() {
        return rng.next_u64() & (n - 1);
    }
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % n;
        }
    }
}

/// Draws a fresh 64-bit seed from a caller-owned generator.
pub fn draw_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
