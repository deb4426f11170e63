//! Deterministic rendering of samples as images, plus the transforms and token
//! estimates that go with them.

pub mod bars;
pub mod canvas;
pub mod colormap;
pub mod fft;
pub mod render;
pub mod spectrogram;
pub mod tokens;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TaskSpec;

pub use canvas::Rgb;
pub use colormap::Colormap;
pub use fft::{dft, Complex64, DftPlan};
pub use render::{render, render_annotated, Annotations};
pub use spectrogram::{stft_spectrogram, Spectrogram, StftConfig, Window, DB_EPSILON};
pub use tokens::{estimate_image_tokens, ImageTokenRule};

#[derive(Debug, Error)]
pub enum VizError {
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("signal of length {len} is shorter than the stft window ({window_len})")]
    SignalTooShort { len: usize, window_len: usize },
    #[error("render config does not fit the sample: {0}")]
    ConfigMismatch(String),
    #[error("png encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Time,
    Frequency,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Time => "time",
            Domain::Frequency => "frequency",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "time" => Ok(Domain::Time),
            "frequency" | "freq" => Ok(Domain::Frequency),
            other => Err(format!("unknown domain {other:?} (expected time or frequency)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImageDetail {
    #[default]
    Low,
    Auto,
}

impl fmt::Display for ImageDetail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageDetail::Low => "low",
            ImageDetail::Auto => "auto",
        })
    }
}

impl FromStr for ImageDetail {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(ImageDetail::Low),
            "auto" => Ok(ImageDetail::Auto),
            other => Err(format!("unknown image detail {other:?} (expected low or auto)")),
        }
    }
}

/// Matplotlib's "tab10" cycle.
pub const DEFAULT_PALETTE: [Rgb; 10] = [
    Rgb(0x1f, 0x77, 0xb4),
    Rgb(0xff, 0x7f, 0x0e),
    Rgb(0x2c, 0xa0, 0x2c),
    Rgb(0xd6, 0x27, 0x28),
    Rgb(0x94, 0x67, 0xbd),
    Rgb(0x8c, 0x56, 0x4b),
    Rgb(0xe3, 0x77, 0xc2),
    Rgb(0x7f, 0x7f, 0x7f),
    Rgb(0xbc, 0xbd, 0x22),
    Rgb(0x17, 0xbe, 0xcf),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub mode: Domain,
    pub width_px: u32,
    pub height_px: u32,
    pub show_timestamps: bool,
    pub show_legend: bool,
    pub palette: Vec<Rgb>,
    pub stft: StftConfig,
    pub colormap: Colormap,
    pub detail: ImageDetail,
    /// Channel to transform in frequency mode when the sample is multivariate.
    pub channel: Option<usize>,
    /// Span of the colormap below the spectrogram's peak, in dB.
    pub db_range: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            mode: Domain::Time,
            width_px: 640,
            height_px: 480,
            show_timestamps: true,
            show_legend: true,
            palette: DEFAULT_PALETTE.to_vec(),
            stft: StftConfig::default(),
            colormap: Colormap::Viridis,
            detail: ImageDetail::Low,
            channel: None,
            db_range: 80.0,
        }
    }
}

impl RenderConfig {
    /// Per-task defaults: RCW is drawn as a spectrogram at auto detail, every
    /// other task as a low-detail line plot.
    pub fn for_task(spec: &TaskSpec) -> Self {
        let mut config = RenderConfig::default();
        if spec.name == "RCW" {
            config.mode = Domain::Frequency;
            config.detail = ImageDetail::Auto;
        }
        config
    }

    pub fn validate(&self) -> Result<(), VizError> {
        if self.width_px < 64 || self.height_px < 64 {
            return Err(VizError::InvalidConfig(format!(
                "canvas must be at least 64x64, got {}x{}",
                self.width_px, self.height_px
            )));
        }
        if self.palette.is_empty() {
            return Err(VizError::InvalidConfig("palette is empty".into()));
        }
        if !(self.db_range.is_finite() && self.db_range > 0.0) {
            return Err(VizError::InvalidConfig("db_range must be positive".into()));
        }
        self.stft.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedImage {
    pub png_bytes: Vec<u8>,
    pub width_px: u32,
    pub height_px: u32,
    pub detail: ImageDetail,
}

/// Side-car metadata written next to each PNG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub width: u32,
    pub height: u32,
    pub mode: Domain,
    pub detail: ImageDetail,
    pub estimated_tokens: u32,
}

impl ImageSidecar {
    pub fn new(image: &RenderedImage, mode: Domain, rule: &ImageTokenRule) -> Self {
        ImageSidecar {
            width: image.width_px,
            height: image.height_px,
            mode,
            detail: image.detail,
            estimated_tokens: estimate_image_tokens(image, rule),
        }
    }
}
