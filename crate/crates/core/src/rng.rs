//! Deterministic pseudo-random generator for bootstrap resampling and
//! synthetic corpora.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood's `splitmix64` finalizer),
//! frozen here so that identical seeds give byte-identical results across
//! platforms, compiler versions, and implementations in other languages:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z  = state
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//! z ^= z >> 27;  z *= 0x94D049BB133111EB
//! z ^= z >> 31
//! ```
//!
//! Derived draws are also pinned:
//! - `next_f64` = `(next_u64 >> 11) * 2^-53`, uniform in [0, 1).
//! - `next_below(n)` = `next_u64 % n`. The modulo bias is below 2^-40 for any
//!   `n` this crate uses and is accepted in exchange for a one-line contract.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, n). Panics if `n == 0`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        self.next_u64() % n
    }

    /// Standard normal via Box-Muller; used only for synthetic corpora.
    pub fn next_gaussian(&mut self) -> f64 {
        // Guard against ln(0).
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Independent child stream for parallel work items. Item `i` always gets
    /// the same stream regardless of scheduling.
    pub fn child(&self, item: u64) -> SplitMix64 {
        let mut probe = SplitMix64::new(self.state ^ item.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        SplitMix64::new(probe.next_u64())
    }
}
