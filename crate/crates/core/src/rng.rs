//! Deterministic per-replica random streams.
//!
//! A stream is a ChaCha8 generator whose 64-bit seed is derived from
//! `(master seed, replica index, stream name)`:
//!
//! ```text
//! seed = mix64(mix64(master) ^ mix64(replica + 0x9E3779B97F4A7C15) ^ fnv1a64(name))
//! mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!            z ^ (z >> 31)
//! fnv1a64:   offset 0xCBF29CE484222325, prime 0x00000100000001B3
//! ```
//!
//! (wrapping arithmetic throughout). These constants are part of the output
//! contract: changing them changes every fixture.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a of a UTF-8 string.
pub fn fnv1a64(s: &str) -> u64 {
    s.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn stream_seed(master: u64, replica: u64, name: &str) -> u64 {
    mix64(mix64(master) ^ mix64(replica.wrapping_add(GOLDEN_GAMMA)) ^ fnv1a64(name))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Stream for `replica` under `master`, with an empty stream name.
    pub fn new(master: u64, replica: u64) -> Self {
        Self::named(master, replica, "")
    }

    pub fn named(master: u64, replica: u64, name: &str) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(stream_seed(master, replica, name)),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..bound` (`bound > 0`).
    pub fn below(&mut self, bound: u64) -> u64 {
        self.inner.random_range(0..bound)
    }

    /// Number of failures before the first success of Bernoulli(`p`) trials,
    /// `0 < p < 1`.
    pub fn geometric_failures(&mut self, log_1mp: f64) -> u64 {
        let g = (self.uniform_open0().ln() / log_1mp).floor();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
