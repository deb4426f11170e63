//! Aggregation of run records into per-cell metrics, and their markdown, CSV
//! and JSON renderings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorTable;
use crate::llm::Price;
use crate::viz::bars::{render_grouped_bars, BarSeries};

use super::metrics::{accuracy, cost, improvement, mean, normalize, round_to, win_count};
use super::record::{CellKey, RunRecord};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    /// Method (`model/modeling/strategy`) to the method it is compared against,
    /// within the same task.
    pub baselines: BTreeMap<String, String>,
    /// Prices by model id; cells without a price get no cost.
    pub prices: BTreeMap<String, Price>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub model_id: String,
    pub modeling: crate::task::Modeling,
    pub strategy: crate::task::ReasoningStrategy,
    pub method: String,
    pub run_accuracies_pct: Vec<f64>,
    pub mean_accuracy_pct: f64,
    pub normalized: Option<f64>,
    pub wins: Option<usize>,
    pub wins_total: Option<usize>,
    pub baseline: Option<String>,
    pub improvement_pct: Option<f64>,
    pub input_tokens_per_sample: f64,
    pub output_tokens_per_sample: f64,
    pub tokens_per_sample: f64,
    pub cost_per_sample_usd: Option<f64>,
    pub abstention_pct: f64,
    pub mean_retries: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

const PCT: u32 = 2;
const NORM: u32 = 4;
const USD: u32 = 8;

/// Aggregates records into one row per cell. Accuracy is averaged over runs
/// and rounded to two decimals before normalized score, wins and improvement
/// are derived from it.
pub fn build_report(
    records: &[RunRecord],
    anchors: &AnchorTable,
    options: &ReportOptions,
) -> Result<Report, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecord);
    }
    let mut cells: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry(r.cell.clone()).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(cells.len());
    for (cell, mut runs) in cells {
        runs.sort_by_key(|r| r.run_index);
        let raw: Vec<f64> = runs
            .iter()
            .map(|r| accuracy(&r.samples))
            .collect::<Result<_, _>>()?;
        let mean_acc = round_to(mean(&raw).expect("non-empty"), PCT);
        let all: Vec<_> = runs.iter().flat_map(|r| r.samples.iter()).collect();
        let n = all.len() as f64;
        let tin: u64 = all.iter().map(|s| s.usage.input_tokens).sum();
        let tout: u64 = all.iter().map(|s| s.usage.output_tokens).sum();
        let abstain = all.iter().filter(|s| s.predicted.is_none()).count();
        let retries: u64 = all.iter().map(|s| s.retries as u64).sum();
        let (normalized, wins) = match anchors.get(&cell.task) {
            Some(_) => (
                Some(round_to(normalize(mean_acc, &cell.task, anchors)?, NORM)),
                Some(win_count(mean_acc, &cell.task, anchors)?),
            ),
            None => (None, None),
        };
        rows.push(ReportRow {
            task: cell.task.clone(),
            model_id: cell.model_id.clone(),
            modeling: cell.modeling,
            strategy: cell.strategy,
            method: cell.method(),
            run_accuracies_pct: raw.iter().map(|a| round_to(*a, PCT)).collect(),
            mean_accuracy_pct: mean_acc,
            normalized,
            wins: wins.map(|w| w.0),
            wins_total: wins.map(|w| w.1),
            baseline: None,
            improvement_pct: None,
            input_tokens_per_sample: round_to(tin as f64 / n, 2),
            output_tokens_per_sample: round_to(tout as f64 / n, 2),
            tokens_per_sample: round_to((tin + tout) as f64 / n, 2),
            cost_per_sample_usd: options
                .prices
                .get(&cell.model_id)
                .map(|p| round_to(cost(tin, tout, p) / n, USD)),
            abstention_pct: round_to(100.0 * abstain as f64 / n, PCT),
            mean_retries: round_to(retries as f64 / n, 2),
            samples: all.len(),
        });
    }
    let means: BTreeMap<(String, String), f64> = rows
        .iter()
        .map(|r| ((r.task.clone(), r.method.clone()), r.mean_accuracy_pct))
        .collect();
    for row in &mut rows {
        let Some(base) = options.baselines.get(&row.method) else {
            continue;
        };
        row.baseline = Some(base.clone());
        if let Some(&b) = means.get(&(row.task.clone(), base.clone())) {
            row.improvement_pct = improvement(row.mean_accuracy_pct, b).ok().map(|v| round_to(v, PCT));
        }
    }
    Ok(Report { rows })
}

fn f(v: f64, d: usize) -> String {
    format!("{v:.d$}")
}

fn opt(v: Option<f64>, d: usize) -> String {
    v.map_or(String::new(), |v| f(v, d))
}

fn signed(v: f64) -> String {
    format!("{}{v:.2}", if v >= 0.0 { "+" } else { "" })
}

fn tasks_in_order(report: &Report) -> Vec<String> {
    let mut tasks: Vec<String> = Vec::new();
    for r in &report.rows {
        if !tasks.contains(&r.task) {
            tasks.push(r.task.clone());
        }
    }
    tasks
}

fn methods_in_order(report: &Report) -> Vec<String> {
    let mut keys: Vec<(&str, crate::task::Modeling, u8, u8, &str)> = report
        .rows
        .iter()
        .map(|r| {
            let (k, n) = match r.strategy {
                crate::task::ReasoningStrategy::Zst => (0, 0),
                crate::task::ReasoningStrategy::Cot => (1, 0),
                crate::task::ReasoningStrategy::Icl { demos_per_class } => (2, demos_per_class),
            };
            (r.model_id.as_str(), r.modeling, k, n, r.method.as_str())
        })
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().map(|k| k.4.to_string()).collect()
}

pub fn to_markdown(report: &Report, anchors: &AnchorTable) -> String {
    let mut s = String::from("# Results\n\n");
    s.push_str("| Task | Method | Runs (%) | Accuracy (%) | Normalized | Wins | Improvement (%) | Tokens/sample | Cost/sample ($) | Abstain (%) |\n");
    s.push_str("|---|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in &report.rows {
        let runs: Vec<String> = r.run_accuracies_pct.iter().map(|a| f(*a, 2)).collect();
        let wins = match (r.wins, r.wins_total) {
            (Some(w), Some(t)) => format!("{w}/{t}"),
            _ => String::new(),
        };
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.task,
            r.method,
            runs.join(", "),
            f(r.mean_accuracy_pct, 2),
            opt(r.normalized, 4),
            wins,
            r.improvement_pct.map_or(String::new(), signed),
            f(r.tokens_per_sample, 2),
            opt(r.cost_per_sample_usd, 8),
            f(r.abstention_pct, 2),
        ));
    }

    let tasks = tasks_in_order(report);
    let methods = methods_in_order(report);
    let cell = |task: &str, method: &str| report.rows.iter().find(|r| r.task == task && r.method == method);
    s.push_str("\n## Accuracy by task (%)\n\n| Method |");
    for t in &tasks {
        s.push_str(&format!(" {t} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(tasks.len()));
    s.push('\n');
    let anchor_row = |label: &str, get: &dyn Fn(&str) -> Option<f64>| {
        let mut line = format!("| {label} |");
        for t in &tasks {
            line.push_str(&format!(" {} |", opt(get(t), 2)));
        }
        line.push('\n');
        line
    };
    s.push_str(&anchor_row("Random Guessing", &|t| {
        anchors.get(t).map(|a| a.random_guess_accuracy)
    }));
    for model in crate::anchors::SUPERVISED_MODELS {
        s.push_str(&anchor_row(model, &|t| anchors.get(t).and_then(|a| a.supervised(model))));
    }
    for m in &methods {
        s.push_str(&format!("| {m} |"));
        for t in &tasks {
            s.push_str(&format!(" {} |", cell(t, m).map_or(String::new(), |r| f(r.mean_accuracy_pct, 2))));
        }
        s.push('\n');
        if tasks.iter().any(|t| cell(t, m).is_some_and(|r| r.improvement_pct.is_some())) {
            s.push_str(&format!("| {m} Improvement |"));
            for t in &tasks {
                let v = cell(t, m).and_then(|r| r.improvement_pct);
                s.push_str(&format!(" {} |", v.map_or(String::new(), |v| format!("{}%", signed(v)))));
            }
            s.push('\n');
        }
        if tasks.iter().any(|t| cell(t, m).is_some_and(|r| r.wins.is_some())) {
            s.push_str(&format!("| {m} Win Supervised |"));
            for t in &tasks {
                let v = cell(t, m).and_then(|r| Some(format!("{}/{}", r.wins?, r.wins_total?)));
                s.push_str(&format!(" {} |", v.unwrap_or_default()));
            }
            s.push('\n');
        }
    }
    s
}

pub fn to_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task",
        "model_id",
        "modeling",
        "strategy",
        "run_accuracies_pct",
        "mean_accuracy_pct",
        "normalized",
        "wins",
        "wins_total",
        "baseline",
        "improvement_pct",
        "input_tokens_per_sample",
        "output_tokens_per_sample",
        "tokens_per_sample",
        "cost_per_sample_usd",
        "abstention_pct",
        "mean_retries",
        "samples",
    ])
    .expect("in-memory write");
    for r in &report.rows {
        let runs: Vec<String> = r.run_accuracies_pct.iter().map(|a| f(*a, 2)).collect();
        w.write_record([
            r.task.clone(),
            r.model_id.clone(),
            r.modeling.to_string(),
            r.strategy.to_string(),
            runs.join(";"),
            f(r.mean_accuracy_pct, 2),
            opt(r.normalized, 4),
            r.wins.map_or(String::new(), |v| v.to_string()),
            r.wins_total.map_or(String::new(), |v| v.to_string()),
            r.baseline.clone().unwrap_or_default(),
            opt(r.improvement_pct, 2),
            f(r.input_tokens_per_sample, 2),
            f(r.output_tokens_per_sample, 2),
            f(r.tokens_per_sample, 2),
            opt(r.cost_per_sample_usd, 8),
            f(r.abstention_pct, 2),
            f(r.mean_retries, 2),
            r.samples.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn to_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// `task,method,normalized` rows for plotting.
pub fn normalized_bars_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task", "method", "normalized"]).expect("in-memory write");
    for r in &report.rows {
        if let Some(n) = r.normalized {
            w.write_record([r.task.clone(), r.method.clone(), f(n, 4)])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn normalized_bars_png(report: &Report) -> Result<Option<Vec<u8>>, EvalError> {
    let tasks: Vec<String> = tasks_in_order(report)
        .into_iter()
        .filter(|t| report.rows.iter().any(|r| &r.task == t && r.normalized.is_some()))
        .collect();
    if tasks.is_empty() {
        return Ok(None);
    }
    let series: Vec<BarSeries> = methods_in_order(report)
        .into_iter()
        .map(|m| BarSeries {
            values: tasks
                .iter()
                .map(|t| {
                    report
                        .rows
                        .iter()
                        .find(|r| &r.task == t && r.method == m)
                        .and_then(|r| r.normalized)
                })
                .collect(),
            name: m,
        })
        .collect();
    render_grouped_bars(&tasks, &series, Some(1.0), 800, 400)
        .map(Some)
        .map_err(|e| EvalError::Chart(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// Writes the requested formats plus `normalized_bars.csv` (and the PNG when
/// `chart` is set) into `dir`. Returns the written paths.
pub fn write_report(
    dir: &Path,
    report: &Report,
    anchors: &AnchorTable,
    formats: &[ReportFormat],
    chart: bool,
) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<(), EvalError> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|source| EvalError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
        Ok(())
    };
    for fmt in formats {
        match fmt {
            ReportFormat::Markdown => put("report.md", to_markdown(report, anchors).as_bytes())?,
            ReportFormat::Csv => put("report.csv", to_csv(report).as_bytes())?,
            ReportFormat::Json => put("report.json", to_json(report).as_bytes())?,
        }
    }
    put("normalized_bars.csv", normalized_bars_csv(report).as_bytes())?;
    if chart {
        if let Some(png) = normalized_bars_png(report)? {
            put("normalized_bars.png", &png)?;
        }
    }
    Ok(written)
}
