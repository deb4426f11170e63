//! Short-time Fourier transform magnitudes in decibels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fft::DftPlan;
use super::VizError;

/// Magnitude floor added before taking the logarithm.
pub const DB_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 256,
            hop: 128,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), VizError> {
        if self.window_len < 2 || self.hop < 1 || self.hop > self.window_len {
            return Err(VizError::InvalidConfig(format!(
                "stft needs window_len >= 2 and 1 <= hop <= window_len (got {} / {})",
                self.window_len, self.hop
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self, signal_len: usize) -> usize {
        if signal_len < self.window_len {
            0
        } else {
            (signal_len - self.window_len) / self.hop + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `[bin][frame]`, `window_len / 2 + 1` bins.
    pub magnitudes_db: Vec<Vec<f64>>,
    /// Bin spacing in Hz; with no sampling rate, in cycles per sample.
    pub freq_resolution_hz: f64,
    /// Start sample index of each frame.
    pub frame_times: Vec<usize>,
}

impl Spectrogram {
    pub fn num_bins(&self) -> usize {
        self.magnitudes_db.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frame_times.len()
    }

    /// Bin with the largest magnitude in `frame`; the lowest such bin on ties.
    pub fn argmax_bin(&self, frame: usize) -> usize {
        let mut best = 0;
        for bin in 1..self.num_bins() {
            if self.magnitudes_db[bin][frame] > self.magnitudes_db[best][frame] {
                best = bin;
            }
        }
        best
    }

    pub fn db_range(&self) -> (f64, f64) {
        self.magnitudes_db
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Periodic Hann window `0.5 - 0.5 cos(2 pi n / N)`.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Hann-windowed frames every `hop` samples; each cell is
/// `20 log10(|X| + DB_EPSILON)`.
pub fn stft_spectrogram(
    signal: &[f64],
    config: &StftConfig,
    sampling_rate_hz: Option<f64>,
) -> Result<Spectrogram, VizError> {
    config.validate()?;
    if signal.len() < config.window_len {
        return Err(VizError::SignalTooShort {
            len: signal.len(),
            window_len: config.window_len,
        });
    }
    let n = config.window_len;
    let window = match config.window {
        Window::Hann => hann(n),
    };
    let plan = DftPlan::new(n);
    let bins = n / 2 + 1;
    let frames = config.frame_count(signal.len());
    let mut magnitudes_db = vec![Vec::with_capacity(frames); bins];
    let mut frame_times = Vec::with_capacity(frames);
    let mut buf = vec![0.0; n];
    for f in 0..frames {
        let start = f * config.hop;
        for (dst, (x, w)) in buf.iter_mut().zip(signal[start..start + n].iter().zip(&window)) {
            *dst = x * w;
        }
        let spectrum = plan.process(&buf);
        for (bin, row) in magnitudes_db.iter_mut().enumerate() {
            row.push(20.0 * (spectrum[bin].norm() + DB_EPSILON).log10());
        }
        frame_times.push(start);
    }
    let freq_resolution_hz = sampling_rate_hz.unwrap_or(1.0) / n as f64;
    Ok(Spectrogram {
        magnitudes_db,
        freq_resolution_hz,
        frame_times,
    })
}
