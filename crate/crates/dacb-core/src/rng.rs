//! Deterministic counter-based random number generator.
//!
//! The generator is SplitMix64 written in counter form: draw `i` of the
//! stream with key `k` is `mix(k + i * GOLDEN)` where `mix` is the SplitMix64
//! finalizer and `GOLDEN` is 2^64 / phi. Every derived quantity (uniform
//! floats, bounded integers, shuffles, Rademacher signs) is computed with
//! integer and IEEE-754 multiply/add arithmetic only, so a given seed yields
//! a bit-identical sequence on every platform.
//!
//! Independent substreams come from `stream(id)`, which rekeys by hashing the
//! parent key with the stream id. Substreams are used throughout the library
//! to tie randomness to a purpose (weight init, epoch shuffles, per-image
//! augmentation) instead of to call order.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            key: mix(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Derive an independent substream. Streams with different ids never
    /// collide with each other or with the parent.
    pub fn stream(&self, id: u64) -> Rng {
        Rng {
            key: mix(self.key.wrapping_add(GOLDEN).wrapping_add(mix(id))),
            counter: 0,
        }
    }

    /// Internal state, for checkpointing.
    pub fn state(&self) -> (u64, u64) {
        (self.key, self.counter)
    }

    pub fn from_state(state: (u64, u64)) -> Self {
        Rng {
            key: state.0,
            counter: state.1,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in [0, n). n must be nonzero. Uses the fixed-point
    /// multiply reduction; the modulo bias is below 2^-53 for any n that fits
    /// in memory.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Rademacher sign: -1.0 or +1.0 with equal probability.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn bool(&mut self) -> bool {
        self.next_u64() & 1 == 0
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// A seeded permutation of 0..n.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
