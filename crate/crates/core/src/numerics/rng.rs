//! Seeded, splittable random number generation.
//!
//! Every consumer derives its own labeled substream from the run seed, so the
//! draws seen by one component never depend on how many draws another
//! component made before it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(state, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Counter-based generator (ChaCha8) keyed by a seed and a stream id.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent stream identified by `label`, derived from this
    /// generator's seed and stream (not from its current position).
    pub fn substream(&self, label: &str) -> Rng {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.stream.to_le_bytes()), label.as_bytes());
        Rng::with_stream(self.seed, h)
    }

    /// Substream for an indexed item (sequence number, trial, ...).
    pub fn substream_indexed(&self, label: &str, index: u64) -> Rng {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.stream.to_le_bytes()), label.as_bytes());
        Rng::with_stream(self.seed, fnv1a(h, &index.to_le_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below requires n > 0");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw via Box–Muller; the second variate of each pair
    /// is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal(&mut self, mean: f64, stddev: f64) -> f64 {
        mean + stddev * self.standard_normal()
    }

    pub fn normals(&mut self, n: usize, mean: f64, stddev: f64) -> Vec<f64> {
        gaussian_draws(self, n, mean, stddev)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Draws an index from an unnormalized discrete distribution.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                return i;
            }
            target -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// `n` draws from `Normal(mean, stddev²)`.
pub fn gaussian_draws(rng: &mut Rng, n: usize, mean: f64, stddev: f64) -> Vec<f64> {
    debug_assert!(stddev >= 0.0);
    (0..n).map(|_| rng.normal(mean, stddev)).collect()
}
