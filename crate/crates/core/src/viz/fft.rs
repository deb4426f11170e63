//! Forward DFT of real signals.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

pub use rustfft::num_complex::Complex64;

/// Reusable forward transform of a fixed length.
#[derive(Clone)]
pub struct DftPlan {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl DftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "transform length must be positive");
        let fft = FftPlanner::new().plan_fft_forward(len);
        DftPlan { fft, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `X[k] = sum_t x[t] * exp(-2*pi*i*k*t/n)`, unnormalized.
    pub fn process(&self, signal: &[f64]) -> Vec<Complex64> {
        assert_eq!(signal.len(), self.len, "signal length does not match plan");
        let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        buf
    }
}

/// Forward, unnormalized DFT of a real signal of any length `n >= 1`.
pub fn dft(signal: &[f64]) -> Vec<Complex64> {
    DftPlan::new(signal.len()).process(signal)
}
