//! Deterministic, splittable random streams.
//!
//! A [`RandomSource`] is a ChaCha8 keystream: the 64-bit seed fixes the key and
//! the stream id selects one of 2^64 independent keystreams. Child streams are
//! addressed by hashing `(parent stream, child id)`, so scenario `j` of batch
//! `k` can always be regenerated from `(seed, k, j)` no matter how many
//! workers evaluated the batch.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::DenseVector;

#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

/// Creates the source for `(seed, stream)`.
pub fn make_rng(seed: u64, stream: u64) -> RandomSource {
    RandomSource::new(seed, stream)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id of child `id` under `parent`.
#[inline]
pub fn child_stream(parent: u64, id: u64) -> u64 {
    splitmix64(parent ^ splitmix64(id.wrapping_add(0x6A09_E667_F3BC_C909)))
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh source on the child stream `id`. Does not advance `self`.
    pub fn substream(&self, id: u64) -> RandomSource {
        RandomSource::new(self.seed, child_stream(self.stream, id))
    }

    /// Shorthand for `substream(a).substream(b)`.
    pub fn substream2(&self, a: u64, b: u64) -> RandomSource {
        RandomSource::new(self.seed, child_stream(child_stream(self.stream, a), b))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Independent `N(mean_i, std^2)` draws. `std = 0` returns `mean` exactly.
pub fn gaussian_vector(rng: &mut RandomSource, mean: &DenseVector, std: f64) -> Result<DenseVector> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::param(format!("standard deviation must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(mean.clone());
    }
    let coords: Vec<f64> = mean.iter().map(|m| m + std * rng.standard_normal()).collect();
    Ok(DenseVector::from(coords))
}
