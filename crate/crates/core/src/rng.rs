use rand::{RngExt, SeedableRng};
use rand_xoshiro::SplitMix64 as Generator;

/// Seeded SplitMix64 stream. Small and stable across platforms, which keeps
/// fixed-seed CLI runs reproducible.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    inner: Generator,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { inner: Generator::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random()
    }

    /// Uniform in `[-1, 1)`.
    pub fn uniform_signed(&mut self) -> f64 {
        self.inner.random_range(-1.0..1.0)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_first_output() {
        // Reference value of SplitMix64 seeded with 0.
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn uniform_bounds() {
        let mut r = SplitMix64::new(7);
        for _ in 0..10_000 {
            let x = r.uniform_signed();
            assert!((-1.0..1.0).contains(&x));
            let n = r.range_inclusive(1, 8);
            assert!((1..=8).contains(&n));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let (mut x, mut y) = (SplitMix64::new(42), SplitMix64::new(42));
        assert!((0..100).all(|_| x.next_u64() == y.next_u64()));
    }
}
