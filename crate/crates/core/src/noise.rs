//! Reproducible driving noise.
//!
//! A `NoiseStream` names a ChaCha keystream: the 64-bit seed selects the key and
//! `stream_id` selects the independent stream within it. Replicas derived from
//! one master seed differ only in `stream_id`, so any replica can be
//! regenerated alone, on any thread, bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Vec3;

/// Multiplier used to spread replica indices over the stream-id space.
pub const STREAM_SPLIT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream for replica `index` of an experiment run under `master`.
    pub fn replica(master: u64, index: u64) -> Self {
        Self {
            seed: master,
            stream_id: index.wrapping_add(1).wrapping_mul(STREAM_SPLIT),
        }
    }

    pub fn source(&self) -> NoiseSource {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        NoiseSource { rng }
    }
}

/// Live generator for a stream.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha12Rng,
}

impl NoiseSource {
    /// Brownian increment over `dt`: `sqrt(dt) * N(0, I_3)`.
    #[inline]
    pub fn increment(&mut self, dt: f64) -> Vec3 {
        let s = dt.sqrt();
        Vec3::new(self.normal() * s, self.normal() * s, self.normal() * s)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform point on the unit sphere.
    #[inline]
    pub fn direction(&mut self) -> Vec3 {
        let d: [f64; 3] = UnitSphere.sample(&mut self.rng);
        Vec3::new(d[0], d[1], d[2])
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

/// Time step with the checks every simulator needs.
pub fn check_dt(dt: f64) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("dt must be positive and finite, got {dt}")));
    }
    Ok(dt)
}
