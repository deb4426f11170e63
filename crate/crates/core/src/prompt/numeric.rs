use crate::task::{TaskSpec, TimeSeriesSample};

use super::PromptError;

pub const DEFAULT_PRECISION: u8 = 4;
pub const MAX_PRECISION: u8 = 10;

/// Formats `v` rounded to `digits` significant digits in plain decimal
/// notation, with trailing zeros dropped. Non-finite values print as `nan`,
/// `inf` or `-inf`.
pub fn format_significant(v: f64, digits: u8) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1) as i32;
    let exp = v.abs().log10().floor() as i32;
    let s = if exp >= digits - 1 {
        let scale = 10f64.powi(exp - digits + 1);
        format!("{:.0}", (v / scale).round() * scale)
    } else {
        let decimals = (digits - 1 - exp) as usize;
        let s = format!("{v:.decimals$}");
        trim_zeros(s)
    };
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One `"<label>: v1, v2, ..."` line per channel, in label order.
pub fn serialize_numeric(
    sample: &TimeSeriesSample,
    spec: &TaskSpec,
    precision: u8,
) -> Result<String, PromptError> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(PromptError::InvalidPrecision(precision));
    }
    let mut lines = Vec::with_capacity(sample.num_channels());
    for (i, channel) in sample.values.iter().enumerate() {
        let label = spec
            .variable_labels
            .get(i)
            .map(String::as_str)
            .unwrap_or("value");
        let values: Vec<String> = channel
            .iter()
            .map(|&v| format_significant(v, precision))
            .collect();
        lines.push(format!("{label}: {}", values.join(", ")));
    }
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0, 4), "0");
        assert_eq!(format_significant(1.0, 4), "1");
        assert_eq!(format_significant(1.23456, 4), "1.235");
        assert_eq!(format_significant(-0.000123456, 3), "-0.000123");
        assert_eq!(format_significant(123456.0, 4), "123500");
        assert_eq!(format_significant(9.99996, 4), "10");
        assert_eq!(format_significant(0.5, 1), "0.5");
        assert_eq!(format_significant(-0.0, 4), "0");
    }
}
