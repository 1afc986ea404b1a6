//! Portable seeded random numbers.
//!
//! The generator is xoshiro256++ seeded from a `u64` through SplitMix64
//! (`rand_xoshiro`'s `seed_from_u64`). Everything layered on top is spelled
//! out here so another implementation can reproduce the same streams:
//!
//! * uniform `f64` in `[0, 1)`: `(next_u64() >> 11) as f64 * 2^-53`
//! * bounded integer in `[0, m)`: `((next_u64() as u128 * m) >> 64)`
//! * standard normal: Box–Muller on two uniforms `u1, u2`, with `u1`
//!   mapped to `1 - u1` so the logarithm never sees zero; the cosine branch
//!   is returned first and the sine branch is cached for the next call
//! * permutation: Fisher–Yates from the last index down, `j = bounded(i + 1)`

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, m)`. `m` must be positive.
    pub fn below(&mut self, m: usize) -> usize {
        debug_assert!(m > 0);
        ((self.next_u64() as u128 * m as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}
