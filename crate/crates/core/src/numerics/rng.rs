//! Reproducible random streams keyed by `(seed, stream_id)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-replicate random stream. ChaCha is counter based, so each draw is a pure
/// function of the seed, the stream id and the position in the stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng, spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives an independent child stream, used to decouple sub-tasks of one replicate.
    pub fn substream(&self, tag: u64) -> Self {
        let mixed = self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        Self::new(mixed, self.stream_id)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let bits = self.rng.next_u64() >> 11;
            if bits != 0 {
                return bits as f64 * (1.0 / (1u64 << 53) as f64);
            }
        }
    }

    /// Standard normal draw by the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * k);
                return u * k;
            }
        }
    }

    /// Exponential draw with the given rate (mean `1 / rate`).
    pub fn exponential(&mut self, rate: f64) -> Result<f64> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!("exponential rate must be positive, got {rate}")));
        }
        Ok(-self.uniform().ln() / rate)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
