//! Deterministic counter-based pseudo-random numbers (SplitMix64).
//!
//! The stream is fully specified so it can be reproduced in any language:
//!
//! ```text
//! state  ← state + 0x9E3779B97F4A7C15          (wrapping)
//! z      ← state
//! z      ← (z ⊕ (z >> 30)) × 0xBF58476D1CE4E5B9 (wrapping)
//! z      ← (z ⊕ (z >> 27)) × 0x94D049BB133111EB (wrapping)
//! output ← z ⊕ (z >> 31)
//! ```
//!
//! Uniform reals are `(output >> 11) × 2⁻⁵³`, which lies in `[0, 1)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    /// An independent stream for parallel work: the stream index is mixed
    /// into the seed.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        RngState::new(mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.seed
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by rejection, without modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n) - 1;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64() {
        // Reference outputs of SplitMix64 seeded with 0 (state starts at 0).
        let mut r = RngState::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(r.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngState::new(43);
        assert_ne!(RngState::new(42).next_u64(), c.next_u64());
    }

    #[test]
    fn streams_differ() {
        let mut a = RngState::for_stream(7, 0);
        let mut b = RngState::for_stream(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn unit_interval_and_mean() {
        let mut r = RngState::new(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn below_is_in_range_and_covers() {
        let mut r = RngState::new(9);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[r.below(7) as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }
}
