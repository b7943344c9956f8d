//! Reproducible random streams.
//!
//! Every random draw in the crate goes through a [`SeededRng`] built from an
//! explicit `(seed, stream_id)` pair. Streams are ChaCha8 streams, so two
//! handles with the same pair produce bit-identical sequences and handles with
//! different stream ids are statistically independent.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh handle on the same seed with a different stream.
    pub fn fork(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        // p = 1 must always fire, p = 0 never
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Stream-id namespaces. The layout is `kind (8 bits) | a (24 bits) | b (32 bits)`,
/// so trajectory indices up to 2^32 and time indices up to 2^24 never collide.
pub mod stream {
    pub const TRAJECTORY: u8 = 1;
    pub const FIXED_CIRCUIT: u8 = 2;
    pub const HAAR_ORACLE: u8 = 3;
    pub const OTOC: u8 = 4;
    pub const COINCIDENCE: u8 = 5;
    pub const SCAN: u8 = 6;

    pub fn id(kind: u8, a: u64, b: u64) -> u64 {
        ((kind as u64) << 56) | ((a & 0x00ff_ffff) << 32) | (b & 0xffff_ffff)
    }
}
