//! Seeded, platform-independent random numbers.
//!
//! Backed by ChaCha8 (`rand_chacha`), whose output stream for a given 64-bit
//! seed is fixed by its specification. Integer draws use rejection sampling
//! on raw 64-bit words so no distribution code outside this file influences
//! the sequence.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Seed drawn from OS entropy, for runs launched without an explicit seed.
    pub fn entropy_seed() -> u64 {
        use std::collections::hash_map::RandomState;
        use std::hash::{BuildHasher, Hasher};
        let mut h = RandomState::new().build_hasher();
        h.write_u128(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or_default(),
        );
        h.finish()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in the half-open range `[lo, hi)`. A degenerate range
    /// `lo == hi` returns `lo` without consuming randomness.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "uniform_int needs lo <= hi, got [{lo}, {hi})"
            )));
        }
        if lo == hi {
            return Ok(lo);
        }
        let span = hi.wrapping_sub(lo) as u64;
        // largest multiple of span that fits in u64, for unbiased reduction
        let zone = u64::MAX - (u64::MAX % span + 1) % span;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return Ok(lo.wrapping_add((v % span) as i64));
            }
        }
    }

    /// `uniform_int` specialised to non-negative sizes.
    pub fn uniform_usize(&mut self, lo: usize, hi: usize) -> Result<usize> {
        self.uniform_int(lo as i64, hi as i64).map(|v| v as usize)
    }

    /// Standard normal draw (Box–Muller, both variates used).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_usize(0, i + 1).expect("non-empty range");
            items.swap(i, j);
        }
    }

    /// Independent generator for worker `index`, derived only from this
    /// generator's seed.
    pub fn child(&self, index: u64) -> Rng {
        Rng::new(child_seed(self.seed, index))
    }
}

/// Deterministic `(seed, index) → seed` derivation (SplitMix64 finalizer over
/// both words).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
