//! Deterministic 64-bit PRNG used everywhere randomness is needed.
//!
//! splitmix64: a fixed additive constant walks the state, and an avalanche mix
//! produces the output. Chosen over an external RNG crate so that mask splits,
//! phantom cohorts and training runs reproduce bit-for-bit on any platform,
//! and so the stream can be re-derived in another language from one paragraph
//! of documentation.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct Splitmix64 {
    state: u64,
}

impl Splitmix64 {
    pub fn new(seed: u64) -> Self {
        Splitmix64 { state: seed }
    }

    /// Derive an independent stream from (seed, tag). Used for per-scan and
    /// per-epoch substreams so one dataset seed drives the whole pipeline.
    pub fn with_stream(seed: u64, tag: u64) -> Self {
        let mut base = Splitmix64::new(seed);
        let a = base.next_u64();
        let mut t = Splitmix64::new(tag ^ GOLDEN);
        let b = t.next_u64();
        Splitmix64::new(a ^ b.rotate_left(17))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). n must be positive.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Pair of independent standard normal samples (Box-Muller).
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (r * angle.cos(), r * angle.sin())
    }

    pub fn next_gaussian(&mut self) -> f64 {
        self.next_gaussian_pair().0
    }

    /// Standard normal truncated to [-2, 2] by redraw.
    pub fn next_truncated_gaussian(&mut self) -> f64 {
        loop {
            let g = self.next_gaussian();
            if g.abs() <= 2.0 {
                return g;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}
