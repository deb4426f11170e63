//! Annotated time-domain line plots and frequency-domain spectrogram images.

use serde::Serialize;

use super::canvas::{Canvas, Rect, Rgb, GLYPH};
use super::spectrogram::{stft_spectrogram, Spectrogram};
use super::{Domain, RenderConfig, RenderedImage, VizError};
use crate::task::{TaskSpec, TimeSeriesSample};

const TICK_LEN: i64 = 4;
const LEGEND_SWATCH: u32 = 16;

/// What was drawn where. Regions are fixed by the canvas size and labels
/// alone, so toggling the legend or timestamps never moves the plot area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotations {
    pub plot_area: Rect,
    /// Right-hand strip holding the legend or colorbar.
    pub legend_area: Rect,
    /// Bottom strip holding x tick marks, tick labels and the x-axis title.
    pub x_label_area: Rect,
    pub legend_entries: Vec<String>,
    pub x_tick_labels: Vec<String>,
    pub y_tick_labels: Vec<String>,
    pub x_axis_title: Option<String>,
    pub y_axis_title: String,
    /// dB range mapped onto the colormap in frequency mode.
    pub colorbar_db: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    plot: Rect,
    legend: Rect,
    x_labels: Rect,
}

fn layout(width: u32, height: u32, legend_chars: usize) -> Layout {
    let left = 72.min(width / 5);
    let bottom = 48.min(height / 5);
    let top = 16.min(height / 10);
    let right = (34 + legend_chars as u32 * GLYPH).clamp(60, 160).min(width / 3);
    let plot = Rect {
        x: left,
        y: top,
        w: width.saturating_sub(left + right).max(1),
        h: height.saturating_sub(top + bottom).max(1),
    };
    let legend = Rect {
        x: plot.right(),
        y: 0,
        w: width.saturating_sub(plot.right()),
        h: plot.bottom(),
    };
    let x_labels = Rect {
        x: 0,
        y: plot.bottom(),
        w: width,
        h: height.saturating_sub(plot.bottom()),
    };
    Layout {
        plot,
        legend,
        x_labels,
    }
}

/// Tick values at 1/2/5 x 10^k spacing covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> (Vec<f64>, f64) {
    let span = (hi - lo).abs().max(1e-12);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm <= 1.0 {
            1.0
        } else if norm <= 2.0 {
            2.0
        } else if norm <= 5.0 {
            5.0
        } else {
            10.0
        };
    let first = (lo / step).ceil();
    let last = (hi / step + 1e-9).floor();
    let ticks = (first as i64..=last as i64).map(|k| k as f64 * step).collect();
    (ticks, step)
}

fn step_decimals(step: f64) -> usize {
    (0..=6)
        .find(|&d| {
            let scaled = step * 10f64.powi(d as i32);
            (scaled - scaled.round()).abs() < 1e-6
        })
        .unwrap_or(6)
}

pub fn format_tick(value: f64, step: f64) -> String {
    let s = format!("{:.*}", step_decimals(step), value);
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn value_range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || hi - lo < 1e-12 {
        let mid = if lo.is_finite() { lo } else { 0.0 };
        return (mid - 1.0, mid + 1.0);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

fn x_px(plot: Rect, frac: f64) -> i64 {
    plot.x as i64 + (frac * (plot.w.saturating_sub(1)) as f64).round() as i64
}

fn y_px(plot: Rect, frac: f64) -> i64 {
    plot.bottom() as i64 - 1 - (frac * (plot.h.saturating_sub(1)) as f64).round() as i64
}

/// X-axis ticks over `[lo, hi]`, where `lo`/`hi` are in display units
/// (seconds or sample index).
fn draw_x_axis(
    canvas: &mut Canvas,
    plot: Rect,
    axis: &Axis,
    title: &str,
    grid: bool,
    show_labels: bool,
) -> Vec<String> {
    let (ticks, step) = nice_ticks(axis.lo, axis.hi, 6);
    let mut labels = Vec::new();
    for &t in &ticks {
        let x = x_px(plot, axis.frac(t));
        if grid {
            canvas.line(x, plot.y as i64 + 1, x, plot.bottom() as i64 - 2, Rgb::GRID);
        }
        if show_labels {
            let y0 = plot.bottom() as i64;
            canvas.line(x, y0, x, y0 + TICK_LEN - 1, Rgb::BLACK);
            let label = format_tick(t, step);
            let w = Canvas::text_width(&label, 1) as i64;
            canvas.text(x - w / 2, y0 + TICK_LEN + 2, &label, 1, Rgb::BLACK);
            labels.push(label);
        }
    }
    if show_labels {
        let w = Canvas::text_width(title, 1) as i64;
        let cx = plot.x as i64 + plot.w as i64 / 2;
        canvas.text(
            cx - w / 2,
            plot.bottom() as i64 + TICK_LEN + 2 + GLYPH as i64 + 6,
            title,
            1,
            Rgb::BLACK,
        );
    }
    labels
}

fn draw_y_axis(canvas: &mut Canvas, plot: Rect, axis: &Axis, title: &str, grid: bool) -> Vec<String> {
    let (ticks, step) = nice_ticks(axis.lo, axis.hi, 5);
    let mut labels = Vec::new();
    for &t in &ticks {
        let y = y_px(plot, axis.frac(t));
        if grid {
            canvas.line(plot.x as i64 + 1, y, plot.right() as i64 - 2, y, Rgb::GRID);
        }
        let x0 = plot.x as i64 - 1;
        canvas.line(x0 - TICK_LEN + 1, y, x0, y, Rgb::BLACK);
        let label = format_tick(t, step);
        let w = Canvas::text_width(&label, 1) as i64;
        canvas.text(x0 - TICK_LEN - 2 - w, y - GLYPH as i64 / 2, &label, 1, Rgb::BLACK);
        labels.push(label);
    }
    let h = Canvas::text_width(title, 1) as i64;
    let cy = plot.y as i64 + plot.h as i64 / 2;
    canvas.text_vertical(2, cy + h / 2, title, Rgb::BLACK);
    labels
}

fn x_axis_for(spec: &TaskSpec, n: usize) -> (Axis, String) {
    match spec.sampling_rate_hz {
        Some(hz) => (
            Axis {
                lo: 0.0,
                hi: (n.saturating_sub(1)).max(1) as f64 / hz,
            },
            "time (s)".to_string(),
        ),
        None => (
            Axis {
                lo: 0.0,
                hi: (n.saturating_sub(1)).max(1) as f64,
            },
            "time (sample index)".to_string(),
        ),
    }
}

fn y_title_for(spec: &TaskSpec) -> String {
    if spec.num_variables == 1 {
        spec.variable_labels
            .first()
            .cloned()
            .unwrap_or_else(|| "value".into())
    } else {
        "value".into()
    }
}

fn render_time(
    sample: &TimeSeriesSample,
    spec: &TaskSpec,
    config: &RenderConfig,
) -> Result<(Canvas, Annotations), VizError> {
    let longest = spec.variable_labels.iter().map(|l| l.chars().count()).max().unwrap_or(1);
    let lay = layout(config.width_px, config.height_px, longest);
    let plot = lay.plot;
    let mut canvas = Canvas::new(config.width_px, config.height_px, Rgb::WHITE);

    let n = sample.len();
    let (x_axis, x_title) = x_axis_for(spec, n);
    let (lo, hi) = value_range(sample.values.iter().flatten());
    let y_axis = Axis { lo, hi };
    let y_title = y_title_for(spec);

    let x_ticks = draw_x_axis(&mut canvas, plot, &x_axis, &x_title, true, config.show_timestamps);
    let y_ticks = draw_y_axis(&mut canvas, plot, &y_axis, &y_title, true);

    let point = |t: usize, v: f64| -> (i64, i64) {
        let fx = if n > 1 { t as f64 / (n - 1) as f64 } else { 0.5 };
        (x_px(plot, fx), y_px(plot, y_axis.frac(v)))
    };
    for (ch, values) in sample.values.iter().enumerate() {
        let color = config.palette[ch % config.palette.len()];
        if values.len() == 1 {
            let p = point(0, values[0]);
            canvas.thick_line_clipped(p, p, 3, color, plot);
            continue;
        }
        for (t, pair) in values.windows(2).enumerate() {
            canvas.thick_line_clipped(point(t, pair[0]), point(t + 1, pair[1]), 2, color, plot);
        }
    }
    canvas.stroke_rect(plot, Rgb::BLACK);

    let mut legend_entries = Vec::new();
    if config.show_legend {
        let x0 = lay.legend.x as i64 + 8;
        for (ch, label) in spec.variable_labels.iter().enumerate() {
            let color = config.palette[ch % config.palette.len()];
            let y = plot.y as i64 + 6 + ch as i64 * (GLYPH as i64 + 8);
            let mid = y + GLYPH as i64 / 2;
            for dy in -1..=1 {
                canvas.line(x0, mid + dy, x0 + LEGEND_SWATCH as i64 - 1, mid + dy, color);
            }
            canvas.text(x0 + LEGEND_SWATCH as i64 + 6, y, label, 1, Rgb::BLACK);
            legend_entries.push(label.clone());
        }
    }

    let annotations = Annotations {
        plot_area: plot,
        legend_area: lay.legend,
        x_label_area: lay.x_labels,
        legend_entries,
        x_tick_labels: x_ticks,
        y_tick_labels: y_ticks,
        x_axis_title: config.show_timestamps.then_some(x_title),
        y_axis_title: y_title,
        colorbar_db: None,
    };
    Ok((canvas, annotations))
}

fn frequency_channel<'a>(
    sample: &'a TimeSeriesSample,
    config: &RenderConfig,
) -> Result<&'a [f64], VizError> {
    let d = sample.num_channels();
    let ch = match (d, config.channel) {
        (1, None) => 0,
        (_, Some(c)) if c < d => c,
        (_, Some(c)) => {
            return Err(VizError::ConfigMismatch(format!(
                "channel {c} requested but sample has {d} channels"
            )))
        }
        (_, None) => {
            return Err(VizError::ConfigMismatch(format!(
                "frequency mode needs a univariate sample or a designated channel; sample has {d} channels"
            )))
        }
    };
    Ok(&sample.values[ch])
}

fn render_frequency(
    sample: &TimeSeriesSample,
    spec: &TaskSpec,
    config: &RenderConfig,
) -> Result<(Canvas, Annotations, Spectrogram), VizError> {
    let signal = frequency_channel(sample, config)?;
    let spectrogram = stft_spectrogram(signal, &config.stft, spec.sampling_rate_hz)?;
    // colorbar labels are at most ~5 chars ("-120")
    let lay = layout(config.width_px, config.height_px, 5);
    let plot = lay.plot;
    let mut canvas = Canvas::new(config.width_px, config.height_px, Rgb::WHITE);

    let (_, max_db) = spectrogram.db_range();
    let (vmin, vmax) = (max_db - config.db_range, max_db);
    let frames = spectrogram.num_frames();
    let bins = spectrogram.num_bins();
    for py in 0..plot.h {
        let from_bottom = plot.h - 1 - py;
        let bin = ((from_bottom as u64 * bins as u64) / plot.h as u64) as usize;
        for px in 0..plot.w {
            let frame = ((px as u64 * frames as u64) / plot.w as u64) as usize;
            let db = spectrogram.magnitudes_db[bin][frame];
            let color = config.colormap.color((db - vmin) / (vmax - vmin));
            canvas.put((plot.x + px) as i64, (plot.y + py) as i64, color);
        }
    }

    let n = signal.len();
    let (x_axis, x_title) = match spec.sampling_rate_hz {
        Some(hz) => (Axis { lo: 0.0, hi: n as f64 / hz }, "time (s)".to_string()),
        None => (Axis { lo: 0.0, hi: n as f64 }, "time (sample index)".to_string()),
    };
    let nyquist = spectrogram.freq_resolution_hz * (bins - 1) as f64;
    let y_axis = Axis { lo: 0.0, hi: nyquist };
    let y_title = if spec.sampling_rate_hz.is_some() {
        "frequency (Hz)"
    } else {
        "frequency (cycles/sample)"
    }
    .to_string();

    let x_ticks = draw_x_axis(&mut canvas, plot, &x_axis, &x_title, false, config.show_timestamps);
    let y_ticks = draw_y_axis(&mut canvas, plot, &y_axis, &y_title, false);
    canvas.stroke_rect(plot, Rgb::BLACK);

    let mut legend_entries = Vec::new();
    let mut colorbar_db = None;
    if config.show_legend {
        let bar = Rect {
            x: lay.legend.x + 8,
            y: plot.y,
            w: 14,
            h: plot.h,
        };
        for py in 0..bar.h {
            let t = (bar.h - 1 - py) as f64 / (bar.h.max(2) - 1) as f64;
            let color = config.colormap.color(t);
            for px in 0..bar.w {
                canvas.put((bar.x + px) as i64, (bar.y + py) as i64, color);
            }
        }
        canvas.stroke_rect(bar, Rgb::BLACK);
        let axis = Axis { lo: vmin, hi: vmax };
        let (ticks, step) = nice_ticks(vmin, vmax, 5);
        for &t in &ticks {
            let y = y_px(bar, axis.frac(t));
            canvas.line(bar.right() as i64, y, bar.right() as i64 + 2, y, Rgb::BLACK);
            let label = format_tick(t, step);
            canvas.text(bar.right() as i64 + 5, y - GLYPH as i64 / 2, &label, 1, Rgb::BLACK);
            legend_entries.push(label);
        }
        canvas.text(bar.x as i64, 2, "dB", 1, Rgb::BLACK);
        colorbar_db = Some((vmin, vmax));
    }

    let annotations = Annotations {
        plot_area: plot,
        legend_area: lay.legend,
        x_label_area: lay.x_labels,
        legend_entries,
        x_tick_labels: x_ticks,
        y_tick_labels: y_ticks,
        x_axis_title: config.show_timestamps.then_some(x_title),
        y_axis_title: y_title,
        colorbar_db,
    };
    Ok((canvas, annotations, spectrogram))
}

/// Renders a sample and reports what was drawn.
pub fn render_annotated(
    sample: &TimeSeriesSample,
    spec: &TaskSpec,
    config: &RenderConfig,
) -> Result<(RenderedImage, Annotations), VizError> {
    config.validate()?;
    if sample.num_channels() == 0 || sample.is_empty() {
        return Err(VizError::ConfigMismatch(format!("sample {} is empty", sample.id)));
    }
    let (canvas, annotations) = match config.mode {
        Domain::Time => render_time(sample, spec, config)?,
        Domain::Frequency => {
            let (c, a, _) = render_frequency(sample, spec, config)?;
            (c, a)
        }
    };
    let image = RenderedImage {
        png_bytes: canvas.to_png()?,
        width_px: canvas.width(),
        height_px: canvas.height(),
        detail: config.detail,
    };
    Ok((image, annotations))
}

/// Renders a sample as PNG. Identical inputs give identical bytes.
pub fn render(
    sample: &TimeSeriesSample,
    spec: &TaskSpec,
    config: &RenderConfig,
) -> Result<RenderedImage, VizError> {
    render_annotated(sample, spec, config).map(|(image, _)| image)
}
