//! Image token estimates for provider pricing.

use serde::{Deserialize, Serialize};

use super::{ImageDetail, RenderedImage};

/// Per-image token rule. Low detail costs a flat `low_detail_tokens`. Auto
/// detail scales the image down (never up) to fit `max_side_px` square, then
/// down until the shorter side is at most `short_side_px`, and charges
/// `base_tokens + tiles * tile_tokens` for `tile_px` square tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageTokenRule {
    pub low_detail_tokens: u32,
    pub base_tokens: u32,
    pub tile_tokens: u32,
    pub tile_px: u32,
    pub max_side_px: u32,
    pub short_side_px: u32,
}

impl Default for ImageTokenRule {
    fn default() -> Self {
        Self::gpt4o_reported()
    }
}

impl ImageTokenRule {
    /// Rule matching the per-image GPT-4o counts reported for the built-in
    /// tasks: 85 tokens at low detail, 262 for a default 640x480 auto-detail
    /// image (one 768 px tile at 177 tokens on an 85 base).
    pub fn gpt4o_reported() -> Self {
        ImageTokenRule {
            low_detail_tokens: 85,
            base_tokens: 85,
            tile_tokens: 177,
            tile_px: 768,
            max_side_px: 2048,
            short_side_px: 768,
        }
    }

    /// OpenAI's published high-detail tiling: 512 px tiles at 170 tokens.
    pub fn openai_published() -> Self {
        ImageTokenRule {
            low_detail_tokens: 85,
            base_tokens: 85,
            tile_tokens: 170,
            tile_px: 512,
            max_side_px: 2048,
            short_side_px: 768,
        }
    }

    pub fn tiles(&self, width: u32, height: u32) -> u32 {
        let (mut w, mut h) = (width as f64, height as f64);
        let long = w.max(h);
        if long > self.max_side_px as f64 {
            let s = self.max_side_px as f64 / long;
            w *= s;
            h *= s;
        }
        let short = w.min(h);
        if short > self.short_side_px as f64 {
            let s = self.short_side_px as f64 / short;
            w *= s;
            h *= s;
        }
        let tile = self.tile_px.max(1) as f64;
        let across = (w.round() / tile).ceil().max(1.0) as u32;
        let down = (h.round() / tile).ceil().max(1.0) as u32;
        across * down
    }

    pub fn estimate(&self, width: u32, height: u32, detail: ImageDetail) -> u32 {
        match detail {
            ImageDetail::Low => self.low_detail_tokens,
            ImageDetail::Auto => self.base_tokens + self.tiles(width, height) * self.tile_tokens,
        }
    }
}

pub fn estimate_image_tokens(image: &RenderedImage, rule: &ImageTokenRule) -> u32 {
    rule.estimate(image.width_px, image.height_px, image.detail)
}
