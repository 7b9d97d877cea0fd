//! Random sources.
//!
//! Every random decision made by a model generator, a kernel or an engine goes
//! through [`RandomSource`]. The discrete primitives (`bernoulli`,
//! `categorical`, `int_below`) are overridable so that an enumerating source
//! can branch on them; continuous draws are built on `next_u64`.

use rand::RngCore;
use rand_mt::Mt64;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 1;

pub trait RandomSource {
    /// Raw 64 random bits.
    fn next_u64(&mut self) -> u64;

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`. Degenerate probabilities consume no randomness.
    fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 || p.is_nan() {
            return false;
        }
        self.uniform01() < p
    }

    /// Index drawn proportionally to non-negative `weights`.
    fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
        let nonzero = weights.iter().filter(|w| **w > 0.0).count();
        if nonzero <= 1 {
            return weights.iter().position(|w| *w > 0.0).unwrap_or(0);
        }
        let u = self.uniform01() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                acc += *w;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    /// Uniform index in `0..n`; `n` must be positive.
    fn int_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "int_below(0)");
        if n == 1 {
            return 0;
        }
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

impl<R: RandomSource + ?Sized> RandomSource for &mut R {
    fn next_u64(&mut self) -> u64 {
        (**self).next_u64()
    }
    fn uniform01(&mut self) -> f64 {
        (**self).uniform01()
    }
    fn bernoulli(&mut self, p: f64) -> bool {
        (**self).bernoulli(p)
    }
    fn categorical(&mut self, weights: &[f64]) -> usize {
        (**self).categorical(weights)
    }
    fn int_below(&mut self, n: usize) -> usize {
        (**self).int_below(n)
    }
}

/// Mersenne Twister (64-bit) stream.
#[derive(Clone)]
pub struct MersenneSource {
    inner: Mt64,
}

impl MersenneSource {
    pub fn new(seed: u64) -> Self {
        MersenneSource { inner: Mt64::new(seed) }
    }

    /// Independent stream for a path of indices below `seed`, e.g. `(round, chain)`.
    pub fn derived(seed: u64, path: &[u64]) -> Self {
        MersenneSource::new(derive_seed(seed, path))
    }
}

impl Default for MersenneSource {
    fn default() -> Self {
        MersenneSource::new(DEFAULT_SEED)
    }
}

impl std::fmt::Debug for MersenneSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MersenneSource")
    }
}

impl RandomSource for MersenneSource {
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream indices into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Exposes a [`RandomSource`] as a `rand` generator so `rand_distr` samplers can be used.
pub struct RngAdapter<'a, R: RandomSource + ?Sized>(pub &'a mut R);

impl<R: RandomSource + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        (self.0.next_u64() >> 32) as u32
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.0.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// A uniform variable on `(0, 1)` revealed only through comparisons.
///
/// Each query `U < c` is answered with a Bernoulli draw conditional on the
/// answers so far, so the answers have exactly the joint law of comparisons
/// against one uniform draw while using only discrete primitives.
#[derive(Clone, Debug)]
pub struct LazyUniform {
    lo: f64,
    hi: f64,
}

impl Default for LazyUniform {
    fn default() -> Self {
        LazyUniform { lo: 0.0, hi: 1.0 }
    }
}

impl LazyUniform {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn less_than(&mut self, c: f64, rng: &mut dyn RandomSource) -> bool {
        if c.is_nan() || c <= self.lo {
            return false;
        }
        if c >= self.hi {
            return true;
        }
        let p = (c - self.lo) / (self.hi - self.lo);
        if rng.bernoulli(p) {
            self.hi = c;
            true
        } else {
            self.lo = c;
            false
        }
    }
}
