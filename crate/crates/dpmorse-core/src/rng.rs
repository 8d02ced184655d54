//! Deterministic random streams.
//!
//! One master seed fans out into independent per-stage streams (model
//! initialization, privacy noise, perturbation directions, data synthesis)
//! so that toggling one stage on or off never shifts the draws of another.
//! ChaCha8 is used for its counter-mode `set_stream` support and identical
//! output on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stage identifiers for [`StreamRng::fork`].
pub mod stage {
    pub const DATA: u64 = 1;
    pub const FIT_INIT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PERTURB: u64 = 4;
}

/// A seeded ChaCha8 stream that can fork independent sub-streams.
#[derive(Clone, Debug)]
pub struct StreamRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn from_seed(seed: u64) -> Self {
        StreamRng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for a pipeline stage: same key, distinct ChaCha
    /// stream counter. Draws from one fork never affect another.
    pub fn fork(&self, stage: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stage);
        StreamRng { seed: self.seed, inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Gaussian draw with standard deviation `sigma`, mean zero.
    pub fn normal(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.inner.sample(StandardNormal);
        sigma * z
    }

    /// Laplace draw with scale `b`, mean zero, via inverse CDF.
    pub fn laplace(&mut self, b: f64) -> f64 {
        // u in (0,1) strictly: reject the exact endpoints so ln stays finite
        let mut u = self.next_f64();
        while u <= 0.0 {
            u = self.next_f64();
        }
        let v = u - 0.5;
        let sign = if v >= 0.0 { 1.0 } else { -1.0 };
        -b * sign * libm::log(1.0 - 2.0 * v.abs())
    }
}
