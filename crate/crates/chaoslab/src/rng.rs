//! Counter-based random numbers for reproducible parallel Monte Carlo.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so replicas
//! and particles can be generated in any order, on any number of threads,
//! and still produce bit-identical results. The mixing function is the
//! splitmix64 finalizer applied twice, which is the usual idiom for
//! counter-based simulation RNGs.

use std::f64::consts::PI;

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Raw 64-bit draw for key `(seed, stream, counter)`.
#[inline]
pub fn draw_u64(seed: u64, stream: u64, counter: u64) -> u64 {
    let k = mix64(seed ^ GOLDEN.wrapping_mul(stream.wrapping_add(1)));
    mix64(k ^ GOLDEN.wrapping_mul(counter.wrapping_add(1)))
}

/// Uniform in (0, 1].
#[inline]
pub fn draw_uniform(seed: u64, stream: u64, counter: u64) -> f64 {
    (((draw_u64(seed, stream, counter) >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
}

/// Standard normal via Box–Muller; consumes counters `2k` and `2k+1`.
#[inline]
pub fn draw_normal(seed: u64, stream: u64, k: u64) -> f64 {
    let u1 = draw_uniform(seed, stream, 2 * k);
    let u2 = draw_uniform(seed, stream, 2 * k + 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Derives an independent sub-seed, e.g. one per replica.
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ GOLDEN.wrapping_mul(tag.wrapping_add(0x51ed2701)))
}

/// Brownian increment source: deterministic per `(seed, stream, step)`.
#[derive(Debug, Clone, Copy)]
pub struct BrownianDriver {
    pub seed: u64,
    pub dt: f64,
}

impl BrownianDriver {
    pub fn new(seed: u64, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { seed, dt }
    }

    /// Component `comp` of the increment vector for `(stream, step)`:
    /// iid N(0, dt) entries.
    #[inline]
    pub fn increment(&self, stream: u64, step: u64, comp: u64, dim: u64) -> f64 {
        draw_normal(self.seed, stream, step * dim + comp) * self.dt.sqrt()
    }
}
