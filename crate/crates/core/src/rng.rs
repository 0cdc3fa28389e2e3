//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from an [`RngStream`] addressed by
//! a root seed and a [`StreamKey`]. The `k`-th output of a stream is a pure
//! function of `(root_seed, key, k)`, so streams can be created in any order,
//! on any thread, and adding a consumer never shifts another consumer's draws.

use rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// What a stream is used for. Part of the key so that, for example, the
/// mask of round 3 and the minibatch of worker 0 at round 3 never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Sample = 1,
    Mask = 2,
    Split = 3,
    Partition = 4,
    Synthetic = 5,
    Noise = 6,
    Estimate = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub purpose: Purpose,
    pub round: u64,
    pub worker: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(purpose: Purpose, round: u64, worker: u64, step: u64) -> Self {
        Self {
            purpose,
            round,
            worker,
            step,
        }
    }

    /// Key for the minibatch drawn by `worker` at local step `step` of `round`.
    pub fn sample(worker: usize, round: u64, step: usize) -> Self {
        Self::new(Purpose::Sample, round, worker as u64, step as u64)
    }

    /// Key for the round's shared sparsification mask.
    pub fn mask(round: u64) -> Self {
        Self::new(Purpose::Mask, round, 0, 0)
    }
}

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    key: StreamKey,
    lo: u64,
    hi: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(root_seed: u64, key: StreamKey) -> Self {
        let mut h = mix64(root_seed ^ GOLDEN);
        for word in [key.purpose as u64, key.round, key.worker, key.step] {
            h = mix64(h.wrapping_add(GOLDEN) ^ word);
        }
        let hi = mix64(h ^ 0xD6E8_FEB8_6659_FD93);
        Self {
            root_seed,
            key,
            lo: h,
            hi,
            counter: 0,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform integer in `[0, bound)` by rejection; `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(mix64(self.lo.wrapping_add(self.counter.wrapping_mul(GOLDEN))) ^ self.hi)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
