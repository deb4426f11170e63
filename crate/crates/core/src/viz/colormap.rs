use serde::{Deserialize, Serialize};

use super::canvas::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    #[default]
    Viridis,
    Magma,
    Gray,
}

const VIRIDIS: [u32; 9] = [
    0x440154, 0x472d7b, 0x3b528b, 0x2c728e, 0x21918c, 0x28ae80, 0x5ec962, 0xaddc30, 0xfde725,
];
const MAGMA: [u32; 9] = [
    0x000004, 0x1c1044, 0x4f127b, 0x812581, 0xb5367a, 0xe55064, 0xfb8761, 0xfec287, 0xfcfdbf,
];
const GRAY: [u32; 2] = [0x000000, 0xffffff];

impl Colormap {
    fn stops(self) -> &'static [u32] {
        match self {
            Colormap::Viridis => &VIRIDIS,
            Colormap::Magma => &MAGMA,
            Colormap::Gray => &GRAY,
        }
    }

    /// Color for `t` in `[0, 1]` (clamped), linear between evenly spaced stops.
    pub fn color(self, t: f64) -> Rgb {
        let stops = self.stops();
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        // 1/1024 steps keep interpolation in integers
        let pos = (t * 1024.0).round() as u32 * (stops.len() as u32 - 1);
        let idx = ((pos / 1024) as usize).min(stops.len() - 2);
        let frac = pos - idx as u32 * 1024;
        let (a, b) = (stops[idx], stops[idx + 1]);
        let ch = |shift: u32| {
            let ca = (a >> shift) & 0xff;
            let cb = (b >> shift) & 0xff;
            ((ca * (1024 - frac) + cb * frac + 512) / 1024) as u8
        };
        Rgb(ch(16), ch(8), ch(0))
    }
}

impl std::str::FromStr for Colormap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "viridis" => Ok(Colormap::Viridis),
            "magma" => Ok(Colormap::Magma),
            "gray" | "grey" => Ok(Colormap::Gray),
            other => Err(format!("unknown colormap {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(Colormap::Viridis.color(0.0), Rgb(0x44, 0x01, 0x54));
        assert_eq!(Colormap::Viridis.color(1.0), Rgb(0xfd, 0xe7, 0x25));
        assert_eq!(Colormap::Gray.color(0.5), Rgb(128, 128, 128));
        assert_eq!(Colormap::Magma.color(-3.0), Colormap::Magma.color(0.0));
    }

    #[test]
    fn viridis_brightens() {
        let lum = |c: Rgb| c.0 as u32 * 299 + c.1 as u32 * 587 + c.2 as u32 * 114;
        let samples: Vec<u32> = (0..=10).map(|i| lum(Colormap::Viridis.color(i as f64 / 10.0))).collect();
        assert!(samples.windows(2).all(|w| w[0] <= w[1]));
    }
}
