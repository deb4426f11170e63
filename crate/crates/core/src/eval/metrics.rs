use crate::anchors::AnchorTable;
use crate::llm::Price;

use super::record::SampleOutcome;
use super::EvalError;

/// Percent correct; abstentions count as wrong.
pub fn accuracy(samples: &[SampleOutcome]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyRecord);
    }
    let correct = samples.iter().filter(|s| s.predicted == Some(s.gold)).count();
    Ok(100.0 * correct as f64 / samples.len() as f64)
}

/// Accuracy divided by the task's random-guess accuracy.
pub fn normalize(accuracy_pct: f64, task: &str, anchors: &AnchorTable) -> Result<f64, EvalError> {
    let a = anchors
        .get(task)
        .ok_or_else(|| EvalError::UnknownTask(task.to_string()))?;
    Ok(accuracy_pct / a.random_guess_accuracy)
}

/// Supervised anchors strictly below `accuracy_pct`, out of all anchors.
pub fn win_count(accuracy_pct: f64, task: &str, anchors: &AnchorTable) -> Result<(usize, usize), EvalError> {
    let a = anchors
        .get(task)
        .ok_or_else(|| EvalError::UnknownTask(task.to_string()))?;
    let wins = a
        .supervised
        .iter()
        .filter(|s| s.accuracy_pct < accuracy_pct)
        .count();
    Ok((wins, a.supervised.len()))
}

/// Relative change in percent.
pub fn improvement(new_pct: f64, baseline_pct: f64) -> Result<f64, EvalError> {
    if baseline_pct == 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (new_pct - baseline_pct) / baseline_pct)
}

/// Dollar cost of one request.
pub fn cost(tokens_in: u64, tokens_out: u64, price: &Price) -> f64 {
    tokens_in as f64 * price.input_per_million / 1e6
        + tokens_out as f64 * price.output_per_million / 1e6
}

pub fn round_to(x: f64, decimals: u32) -> f64 {
    let s = 10f64.powi(decimals as i32);
    let r = (x * s).round() / s;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
