//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a [`Stream`], which is
//! xoshiro256++ seeded through SplitMix64:
//!
//! 1. A SplitMix64 generator starts at state `seed`. Each call adds
//!    `0x9E3779B97F4A7C15` to the state and returns the finalized state
//!    `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! 2. Its first four outputs become the xoshiro256++ state words `s[0..4]`.
//! 3. Each xoshiro256++ output is `rotl(s[0] + s[3], 23) + s[0]`, followed by
//!    the usual xoshiro256 state transition.
//!
//! A uniform draw on `[0, 1)` takes the top 53 bits of one output:
//! `(next_u64 >> 11) * 2^-53`. Standard normal draws use the ziggurat sampler
//! from `rand_distr`.
//!
//! Independent sub-streams are derived with [`derive_seed`], so that each
//! purpose (weight init, data split, batch order, data generation) gets its own
//! stream and results never depend on scheduling.

use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Tags for [`derive_seed`]. Values are arbitrary but fixed forever.
pub mod tag {
    pub const INIT: u64 = 0x1;
    pub const SPLIT: u64 = 0x2;
    pub const BATCH: u64 = 0x3;
    pub const DATA: u64 = 0x4;
    pub const FORWARD: u64 = 0xF0;
    pub const REVERSE: u64 = 0xF1;
    pub const PROBE: u64 = 0x5;
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, tag)`.
///
/// `mix64(mix64(master + GAMMA) ^ (tag * GAMMA))`, wrapping arithmetic.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    mix64(mix64(master.wrapping_add(GOLDEN_GAMMA)) ^ tag.wrapping_mul(GOLDEN_GAMMA))
}

/// A seeded random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn derived(master: u64, tag: u64) -> Self {
        Self::new(derive_seed(master, tag))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-bound, bound)`.
    #[inline]
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        bound * (2.0 * self.uniform() - 1.0)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n` (Lemire's nearly-divisionless method).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
