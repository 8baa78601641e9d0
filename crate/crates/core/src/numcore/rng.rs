use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent random streams derived from one run seed.
///
/// Each stream is a separate ChaCha8 keystream (same key, different stream
/// id), so ablations can share every source of randomness except the one that
/// the ablated component consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Batches,
    Init,
    Reparam,
    CompInit,
    CompReparam,
    Generate,
    Data,
    Eval,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Batches => 1,
            Stream::Init => 2,
            Stream::Reparam => 3,
            Stream::CompInit => 4,
            Stream::CompReparam => 5,
            Stream::Generate => 6,
            Stream::Data => 7,
            Stream::Eval => 8,
            Stream::Custom(k) => 1 << 32 | k,
        }
    }
}

/// Seeded generator: ChaCha8 keystream, 53-bit uniforms, Box-Muller normals.
///
/// The algorithm is fixed, so a seed reproduces the same draws on every
/// platform.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stream(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        Rng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller; one draw consumes two uniforms.
    pub fn normal(&mut self) -> f64 {
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform integer in `0..n` without modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
