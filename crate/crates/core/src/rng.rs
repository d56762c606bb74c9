//! Portable seeded randomness.
//!
//! Partition plans and permutation sets must be reproducible across
//! platforms and releases, so every random draw goes through this module:
//! ChaCha8 (a fixed, documented stream cipher) for the raw bits and
//! hand-written bounded sampling / shuffling on top of it. Nothing here
//! depends on `rand`'s distribution code, whose output may change between
//! versions.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bumped whenever the stream produced for a given seed changes.
pub const RNG_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for a sub-task, e.g. one per dataset.
    pub fn derived(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-and-reject).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below(0)");
        let bound = bound as u64;
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let product = (self.next_u64() as u128) * (bound as u128);
            if (product as u64) >= threshold {
                return (product >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle, drawing from the back of the slice.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }

    /// `amount` distinct values from `0..n`, uniformly, in random order.
    pub fn sample_distinct(&mut self, n: usize, amount: usize) -> Vec<usize> {
        assert!(amount <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..amount {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(amount);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.below(1000), b.below(1000));
        }
    }

    #[test]
    fn stream_is_pinned() {
        // Changing these values means RNG_VERSION must be bumped.
        let mut rng = SeededRng::new(7);
        assert_eq!(rng.next_u64(), 2_910_824_217_569_608_635);
        let mut rng = SeededRng::new(7);
        let draws: Vec<usize> = (0..5).map(|_| rng.below(10)).collect();
        assert_eq!(draws, vec![1, 1, 7, 7, 6]);
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut rng = SeededRng::new(1);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[rng.below(6)] += 1;
        }
        for c in counts {
            assert!((9_400..10_600).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn sample_distinct_has_no_repeats() {
        let mut rng = SeededRng::new(3);
        for amount in 0..=10 {
            let mut s = rng.sample_distinct(10, amount);
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), amount);
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = SeededRng::new(9);
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
