//! Run configuration: a TOML file with `${VAR}` environment interpolation.
//!
//! ```toml
//! tasks = ["ECG", "HAR"]
//! data_dir = "data"            # one canonical dataset directory per task
//! output_dir = "results"
//! modeling = "visual"
//! strategies = ["zst", "icl:1"]
//! per_class = 10
//! runs = 3
//! seed = 42
//!
//! [render]
//! show_legend = false
//!
//! [[providers]]
//! model_id = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//! price = { input_per_million = 2.5, output_per_million = 10.0 }
//!
//! [report.baselines]
//! "gpt-4o/visual/zst" = "gpt-4o/numeric/zst"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ReportFormat;
use crate::llm::{ProviderConfig, DEFAULT_ANSWER_RETRY_CAP};
use crate::prompt::{PlanFallback, DEFAULT_PRECISION, MAX_PRECISION};
use crate::task::{Modeling, ReasoningStrategy};
use crate::viz::{Colormap, Domain, ImageDetail, RenderConfig, Rgb, StftConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {0} referenced by the config is not set")]
    MissingEnv(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Partial render settings layered over each task's defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOverrides {
    pub mode: Option<Domain>,
    pub width_px: Option<u32>,
    pub height_px: Option<u32>,
    pub show_timestamps: Option<bool>,
    pub show_legend: Option<bool>,
    pub palette: Option<Vec<Rgb>>,
    pub stft: Option<StftConfig>,
    pub colormap: Option<Colormap>,
    pub detail: Option<ImageDetail>,
    pub channel: Option<usize>,
    pub db_range: Option<f64>,
}

impl RenderOverrides {
    pub fn apply(&self, c: &mut RenderConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        set!(mode, width_px, height_px, show_timestamps, show_legend, palette, stft, colormap, detail, db_range);
        if self.channel.is_some() {
            c.channel = self.channel;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub formats: Vec<ReportFormat>,
    pub chart: bool,
    pub baselines: BTreeMap<String, String>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            formats: vec![ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json],
            chart: false,
            baselines: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<String>,
    /// Parent directory holding one dataset directory per task name.
    pub data_dir: PathBuf,
    /// Per-task dataset directories, overriding `data_dir/<task>`.
    pub datasets: BTreeMap<String, PathBuf>,
    pub output_dir: PathBuf,
    pub plans_dir: PathBuf,
    pub providers: Vec<ProviderConfig>,
    pub strategies: Vec<ReasoningStrategy>,
    pub modeling: Modeling,
    pub per_class: usize,
    pub runs: u32,
    pub seed: u64,
    /// Significant digits for numeric serialization.
    pub precision: u8,
    /// Attempts per sample before it is scored as an abstention.
    pub answer_retry_cap: u32,
    /// Fraction of a cell's samples allowed to abstain before the cell is
    /// aborted; `None` never aborts.
    pub abstention_quota: Option<f64>,
    pub skip_planning: bool,
    pub plan_fallback: PlanFallback,
    pub render: RenderOverrides,
    pub report: ReportSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tasks: Vec::new(),
            data_dir: PathBuf::from("data"),
            datasets: BTreeMap::new(),
            output_dir: PathBuf::from("results"),
            plans_dir: PathBuf::from("plans"),
            providers: Vec::new(),
            strategies: vec![ReasoningStrategy::Zst],
            modeling: Modeling::Numeric,
            per_class: 10,
            runs: 3,
            seed: 0,
            precision: DEFAULT_PRECISION,
            answer_retry_cap: DEFAULT_ANSWER_RETRY_CAP,
            abstention_quota: None,
            skip_planning: false,
            plan_fallback: PlanFallback::Error,
            render: RenderOverrides::default(),
            report: ReportSettings::default(),
        }
    }
}

static ENV_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

/// Replaces every `${VAR}` with the variable's value.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in ENV_RE.captures_iter(text) {
        let m = cap.get(0).expect("whole match");
        let value = lookup(&cap[1]).ok_or_else(|| ConfigError::MissingEnv(cap[1].to_string()))?;
        out.push_str(&text[last..m.start()]);
        out.push_str(&value);
        last = m.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let text = interpolate_env(text, |k| std::env::var(k).ok())?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads and parses `path`; relative paths inside are resolved against
    /// the file's directory. Returns the config and the raw file text.
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&raw, path)?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        cfg.resolve_paths(&base);
        Ok((cfg, raw))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.output_dir);
        fix(&mut self.plans_dir);
        for p in self.datasets.values_mut() {
            fix(p);
        }
        for prov in &mut self.providers {
            if let Some(s) = &mut prov.mock_script {
                fix(s);
            }
        }
    }

    pub fn dataset_dir(&self, task: &str) -> PathBuf {
        self.datasets
            .get(task)
            .cloned()
            .unwrap_or_else(|| self.data_dir.join(task))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.tasks.is_empty() {
            return bad("no tasks listed".into());
        }
        if self.providers.is_empty() {
            return bad("no providers listed".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies listed".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.per_class == 0 {
            return bad("per_class must be at least 1".into());
        }
        if !(1..=MAX_PRECISION).contains(&self.precision) {
            return bad(format!("precision must be in 1..={MAX_PRECISION}"));
        }
        if self.answer_retry_cap == 0 {
            return bad("answer_retry_cap must be at least 1".into());
        }
        if let Some(q) = self.abstention_quota {
            if !(0.0..=1.0).contains(&q) {
                return bad("abstention_quota must be in [0, 1]".into());
            }
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.providers {
            p.validate().map_err(|e| ConfigError::Invalid(format!("provider {}: {e}", p.model_id)))?;
            if !seen.insert(&p.model_id) {
                return bad(format!("provider {} listed twice", p.model_id));
            }
            if self.modeling == Modeling::Visual && !p.multimodal {
                return bad(format!(
                    "visual modeling needs multimodal providers; {} is not",
                    p.model_id
                ));
            }
        }
        let mut r = RenderConfig::default();
        self.render.apply(&mut r);
        r.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
tasks = ["ECG"]
modeling = "visual"
strategies = ["zst", "icl:2"]
per_class = 2
seed = 7

[render]
show_legend = false
width_px = 320

[[providers]]
kind = "mock"
model_id = "mock"
mock_script = "${SCRIPT_DIR}/script.json"
"#;

    #[test]
    fn parse_and_interpolate() {
        let text = interpolate_env(SAMPLE, |k| (k == "SCRIPT_DIR").then(|| "/tmp/s".to_string())).unwrap();
        let c: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(c.strategies[1], ReasoningStrategy::Icl { demos_per_class: 2 });
        assert_eq!(c.providers[0].mock_script.as_deref(), Some(Path::new("/tmp/s/script.json")));
        assert_eq!(c.providers[0].temperature, 0.0);
        assert_eq!(c.runs, 3);
        c.validate().unwrap();
        let mut r = RenderConfig::default();
        c.render.apply(&mut r);
        assert!(!r.show_legend);
        assert_eq!(r.width_px, 320);
    }

    #[test]
    fn missing_env_is_an_error() {
        assert!(matches!(
            interpolate_env("a = \"${NOPE_X}\"", |_| None),
            Err(ConfigError::MissingEnv(v)) if v == "NOPE_X"
        ));
    }

    #[test]
    fn validation() {
        let mut c: RunConfig = toml::from_str(&SAMPLE.replace("${SCRIPT_DIR}", "/x")).unwrap();
        c.runs = 0;
        assert!(c.validate().is_err());
        c.runs = 1;
        c.providers[0].multimodal = false;
        assert!(c.validate().is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
