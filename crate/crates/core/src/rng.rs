//! Seeded, splittable randomness.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// ChaCha-backed generator that can fork independent child streams.
///
/// Every random choice in the crate draws from one of these; there is no
/// ambient or thread-local source.
#[derive(Clone, Debug)]
pub struct SplitRng {
    inner: ChaCha12Rng,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        SplitRng { inner: ChaCha12Rng::seed_from_u64(seed) }
    }

    /// Independent generator derived from the next 256 bits of this one.
    pub fn fork(&mut self) -> SplitRng {
        let mut seed = [0u8; 32];
        self.inner.fill_bytes(&mut seed);
        SplitRng { inner: ChaCha12Rng::from_seed(seed) }
    }

    /// Deterministic child for a labelled purpose; does not advance `self`.
    pub fn child(&self, stream: u64) -> SplitRng {
        let mut inner = ChaCha12Rng::from_seed(self.inner.get_seed());
        inner.set_stream(stream.wrapping_add(1));
        let mut seed = [0u8; 32];
        inner.fill_bytes(&mut seed);
        SplitRng { inner: ChaCha12Rng::from_seed(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        self.inner.fill_bytes(out);
    }

    pub fn bit(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal sample (Box-Muller).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }
}

impl RngCore for SplitRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SplitRng::new(7);
        let mut b = SplitRng::new(7);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn children_differ_and_are_stable() {
        let r = SplitRng::new(1);
        let mut c0 = r.child(0);
        let mut c1 = r.child(1);
        assert_ne!(c0.next_u64(), c1.next_u64());
        assert_eq!(r.child(0).next_u64(), SplitRng::new(1).child(0).next_u64());
    }

    #[test]
    fn uniform_in_range() {
        let mut r = SplitRng::new(9);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / 10_000.0 - 0.5).abs() < 0.02);
        for _ in 0..100 {
            assert!(r.below(3) < 3);
        }
    }
}
