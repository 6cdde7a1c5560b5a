//! SplitMix64: a fixed, named 64-bit PRNG with cheap splittable streams.
//!
//! Mesh perturbation draws its offsets from a per-vertex stream keyed by
//! (seed, vertex index), so the realized grid is a pure function of the seed,
//! independent of traversal order, platform, and thread count.

/// SplitMix64 state (Steele, Lea, Flood; public-domain reference algorithm).
#[derive(Debug, Clone, Copy)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Stream seeded directly.
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for a keyed substream (e.g. one mesh vertex).
    /// The key is hashed through one SplitMix64 round so consecutive keys
    /// do not produce correlated streams.
    pub fn keyed(seed: u64, key_a: u64, key_b: u64) -> Self {
        let mut s = Self::new(seed ^ key_a.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let h = s.next_u64();
        Self::new(h ^ key_b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1), from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [-1, 1), from the top 53 bits.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }
}
