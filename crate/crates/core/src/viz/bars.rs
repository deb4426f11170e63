//! Grouped bar chart used by reports for normalized scores.

use super::canvas::{Canvas, Rect};
use super::render::{format_tick, nice_ticks};
use super::{Rgb, VizError, DEFAULT_PALETTE};

#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    pub name: String,
    /// One value per group; `None` leaves a gap.
    pub values: Vec<Option<f64>>,
}

/// Draws one cluster per group with one bar per series, plus a dashed
/// reference line at `reference` (e.g. 1.0 for the random-guess level).
pub fn render_grouped_bars(
    groups: &[String],
    series: &[BarSeries],
    reference: Option<f64>,
    width: u32,
    height: u32,
) -> Result<Vec<u8>, VizError> {
    if groups.is_empty() || series.is_empty() {
        return Err(VizError::InvalidConfig("bar chart needs groups and series".into()));
    }
    if width < 64 || height < 64 {
        return Err(VizError::InvalidConfig("bar chart must be at least 64x64".into()));
    }
    if let Some(s) = series.iter().find(|s| s.values.len() != groups.len()) {
        return Err(VizError::InvalidConfig(format!(
            "series {} has {} values for {} groups",
            s.name,
            s.values.len(),
            groups.len()
        )));
    }

    let mut canvas = Canvas::new(width, height, Rgb::WHITE);
    let longest = series.iter().map(|s| s.name.chars().count()).max().unwrap_or(0);
    let right = ((34 + longest as u32 * 8).clamp(60, 200)).min(width / 3);
    let plot = Rect {
        x: 56.min(width / 5),
        y: 16.min(height / 10),
        w: width - 56.min(width / 5) - right,
        h: height - 16.min(height / 10) - 32.min(height / 5),
    };

    let max = series
        .iter()
        .flat_map(|s| s.values.iter().flatten())
        .copied()
        .chain(reference)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let top = if max <= 0.0 { 1.0 } else { max * 1.1 };
    let (ticks, step) = nice_ticks(0.0, top, 5);
    let y_of = |v: f64| -> i64 {
        let f = (v / top).clamp(0.0, 1.0);
        plot.bottom() as i64 - 1 - (f * (plot.h - 1) as f64).round() as i64
    };

    for t in &ticks {
        let y = y_of(*t);
        canvas.line(plot.x as i64, y, plot.right() as i64 - 1, y, Rgb::GRID);
        let label = format_tick(*t, step);
        let lx = plot.x as i64 - 4 - Canvas::text_width(&label, 1) as i64;
        canvas.text(lx, y - 4, &label, 1, Rgb::BLACK);
    }

    let group_w = plot.w as f64 / groups.len() as f64;
    let bar_w = ((group_w * 0.8) / series.len() as f64).max(1.0);
    for (g, name) in groups.iter().enumerate() {
        let gx = plot.x as f64 + g as f64 * group_w + group_w * 0.1;
        for (s, ser) in series.iter().enumerate() {
            let Some(v) = ser.values[g].filter(|v| v.is_finite()) else {
                continue;
            };
            let x0 = (gx + s as f64 * bar_w).round() as u32;
            let x1 = (gx + (s + 1) as f64 * bar_w).round() as u32;
            let y = y_of(v.max(0.0)) as u32;
            let color = DEFAULT_PALETTE[s % DEFAULT_PALETTE.len()];
            canvas.fill_rect(
                Rect {
                    x: x0,
                    y,
                    w: x1.saturating_sub(x0).max(1),
                    h: plot.bottom() - y,
                },
                color,
            );
        }
        let cx = (plot.x as f64 + (g as f64 + 0.5) * group_w).round() as i64;
        let tw = Canvas::text_width(name, 1) as i64;
        canvas.text(cx - tw / 2, plot.bottom() as i64 + 6, name, 1, Rgb::BLACK);
    }

    if let Some(r) = reference.filter(|r| r.is_finite()) {
        let y = y_of(r);
        let mut x = plot.x as i64;
        while x < plot.right() as i64 {
            canvas.line(x, y, (x + 5).min(plot.right() as i64 - 1), y, Rgb::BLACK);
            x += 10;
        }
    }
    canvas.stroke_rect(plot, Rgb::BLACK);

    for (s, ser) in series.iter().enumerate() {
        let y = plot.y as i64 + 4 + s as i64 * 14;
        let x = plot.right() as i64 + 8;
        let color = DEFAULT_PALETTE[s % DEFAULT_PALETTE.len()];
        canvas.fill_rect(
            Rect {
                x: x as u32,
                y: y as u32,
                w: 16,
                h: 8,
            },
            color,
        );
        canvas.text(x + 22, y, &ser.name, 1, Rgb::BLACK);
    }

    canvas.to_png()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viz::canvas::decode_png;

    #[test]
    fn draws_and_is_deterministic() {
        let groups = vec!["ECG".to_string(), "HAR".to_string()];
        let series = vec![
            BarSeries {
                name: "a".into(),
                values: vec![Some(1.2), None],
            },
            BarSeries {
                name: "b".into(),
                values: vec![Some(0.5), Some(3.0)],
            },
        ];
        let a = render_grouped_bars(&groups, &series, Some(1.0), 320, 200).unwrap();
        let b = render_grouped_bars(&groups, &series, Some(1.0), 320, 200).unwrap();
        assert_eq!(a, b);
        let c = decode_png(&a).unwrap();
        assert_eq!((c.width(), c.height()), (320, 200));
    }

    #[test]
    fn rejects_ragged_series() {
        let series = vec![BarSeries {
            name: "a".into(),
            values: vec![Some(1.0)],
        }];
        assert!(render_grouped_bars(&["x".into(), "y".into()], &series, None, 200, 200).is_err());
    }
}
