//! Seeded, splittable random streams.
//!
//! Every `(seed, stream_id)` pair maps to its own ChaCha8 keystream, so a
//! Monte Carlo run can own an independent stream per noise source and the
//! draws do not depend on scheduling or platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_int(&mut self, lo: u32, hi: u32) -> u32 {
        self.rng.random_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// Draw from `N(mean, std²)`. A zero `std` returns `mean` exactly without
/// consuming randomness.
pub fn sample_gaussian(rng: &mut RngStream, mean: f64, std: f64) -> Result<f64> {
    if std < 0.0 || std.is_nan() {
        return Err(Error::NegativeStd(std));
    }
    if std == 0.0 {
        return Ok(mean);
    }
    Ok(mean + std * rng.standard_normal())
}

/// `|N(0, std²)|`.
pub fn sample_half_normal(rng: &mut RngStream, std: f64) -> Result<f64> {
    sample_gaussian(rng, 0.0, std).map(f64::abs)
}
