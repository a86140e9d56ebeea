//! SplitMix64, the portable generator behind every seeded stream in the crate.
//!
//! The state advances by the golden-gamma constant and the output is the
//! standard SplitMix64 finalizer, so the same seed yields the same stream in
//! any language that implements those few lines.

use nalgebra::{DMatrix, DVector};

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

    /// Uniform on `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-1, 1)`.
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn symmetric_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.symmetric())
    }

    /// Row-major fill, so the stream order matches the serialized layout.
    pub fn symmetric_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| self.symmetric()).collect();
        DMatrix::from_row_slice(rows, cols, &data)
    }

    /// A standard normal draw by the Box-Muller transform.
    pub fn normal(&mut self) -> f64 {
        // 1 - u lies in (0, 1], so the logarithm is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// A point drawn uniformly from the Euclidean ball of the given radius:
    /// a Gaussian direction scaled by `radius * u^(1/n)`.
    pub fn ball_point(&mut self, n: usize, radius: f64) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(n, |_, _| self.normal());
            let norm = v.norm();
            if norm > 1e-300 {
                let r = radius * self.next_f64().powf(1.0 / n as f64);
                return v * (r / norm);
            }
        }
    }
}
