//! Planning-stage output: which domain to draw and which clues to look for.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::viz::Domain;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualizationPlan {
    pub task: String,
    pub domain_choice: Domain,
    pub hints: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    Llm,
    Manual,
}

/// On-disk form of a plan, `plans/<task>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPlan {
    #[serde(flatten)]
    pub plan: VisualizationPlan,
    pub source: PlanSource,
    pub created_at: String,
}

/// What to do when a planning response names neither domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlanFallback {
    #[default]
    Error,
    Time,
    Frequency,
}

impl std::str::FromStr for PlanFallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "error" => Ok(PlanFallback::Error),
            "time" => Ok(PlanFallback::Time),
            "frequency" | "freq" => Ok(PlanFallback::Frequency),
            other => Err(format!("unknown plan fallback {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("planning response names neither time- nor frequency-domain: {0:?}")]
    Unparseable(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

static TIME_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\btime[\s-]*domain\b").unwrap());
static FREQ_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bfrequency[\s-]*domain\b").unwrap());
// keyword before these wins ("frequency-domain is better")
static AFTER_CUE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(better|preferable|superior|more (suitable|appropriate|informative|effective|useful))\b")
        .unwrap()
});
// keyword after these wins ("I recommend frequency-domain")
static BEFORE_CUE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(recommend|prefer|choose|go with|opt for|answer:)").unwrap()
});
static BULLET_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[-*+•]\s*|\d+\s*[.)]\s*)").unwrap());
static LEAD_LABEL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:key\s*)?(?:keywords?|features?)\s*:\s*").unwrap());

fn mentions(sentence: &str) -> (Vec<usize>, Vec<usize>) {
    let t = TIME_RE.find_iter(sentence).map(|m| m.start()).collect();
    let f = FREQ_RE.find_iter(sentence).map(|m| m.start()).collect();
    (t, f)
}

fn resolve_sentence(sentence: &str) -> Domain {
    let (t, f) = mentions(sentence);
    match (t.is_empty(), f.is_empty()) {
        (false, true) => return Domain::Time,
        (true, false) => return Domain::Frequency,
        _ => {}
    }
    let all: Vec<(usize, Domain)> = t
        .iter()
        .map(|&p| (p, Domain::Time))
        .chain(f.iter().map(|&p| (p, Domain::Frequency)))
        .collect();
    if let Some(cue) = AFTER_CUE_RE.find(sentence) {
        if let Some(&(_, d)) = all.iter().filter(|(p, _)| *p < cue.start()).max_by_key(|(p, _)| *p) {
            return d;
        }
    }
    if let Some(cue) = BEFORE_CUE_RE.find(sentence) {
        if let Some(&(_, d)) = all.iter().filter(|(p, _)| *p >= cue.end()).min_by_key(|(p, _)| *p) {
            return d;
        }
    }
    Domain::Frequency
}

fn detect_domain(response: &str) -> Option<Domain> {
    let (t, f) = mentions(response);
    match (t.is_empty(), f.is_empty()) {
        (false, true) => return Some(Domain::Time),
        (true, false) => return Some(Domain::Frequency),
        (false, false) => {
            let last = response
                .split(['.', '!', '?', '\n'])
                .rev()
                .find(|s| TIME_RE.is_match(s) || FREQ_RE.is_match(s))?;
            return Some(resolve_sentence(last));
        }
        (true, true) => {}
    }
    let bare = response
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_ascii_lowercase();
    match bare.as_str() {
        "time" => Some(Domain::Time),
        "frequency" => Some(Domain::Frequency),
        _ => None,
    }
}

fn clean_item(line: &str) -> String {
    let s = line.replace("**", "").replace('`', "");
    let s = BULLET_RE.replace(s.trim(), "");
    let s = LEAD_LABEL_RE.replace(&s, "");
    s.trim().trim_end_matches(['.', ',', ';']).trim().to_string()
}

/// Feature keywords from a planning response: every line that does not talk
/// about the domain choice, bullets and numbering removed, rendered as
/// `1. a; 2. b; ...`.
fn extract_hints(response: &str) -> String {
    let mut items: Vec<String> = response
        .lines()
        .filter(|l| !TIME_RE.is_match(l) && !FREQ_RE.is_match(l))
        .map(clean_item)
        .filter(|s| !s.is_empty() && !s.ends_with(':'))
        .collect();
    if items.len() == 1 && items[0].contains([',', ';']) {
        items = items[0]
            .split([',', ';'])
            .map(clean_item)
            .filter(|s| !s.is_empty())
            .collect();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn parse_plan(
    response: &str,
    task: &str,
    fallback: PlanFallback,
) -> Result<VisualizationPlan, PlanError> {
    let trimmed = response.trim();
    let domain = match detect_domain(trimmed) {
        Some(d) => d,
        None => {
            let d = match fallback {
                PlanFallback::Error => return Err(PlanError::Unparseable(trimmed.to_string())),
                PlanFallback::Time => Domain::Time,
                PlanFallback::Frequency => Domain::Frequency,
            };
            if trimmed.is_empty() {
                return Err(PlanError::Unparseable(String::new()));
            }
            return Ok(VisualizationPlan {
                task: task.to_string(),
                domain_choice: d,
                hints: trimmed.to_string(),
            });
        }
    };
    let mut hints = extract_hints(trimmed);
    if hints.is_empty() {
        hints = trimmed.to_string();
    }
    Ok(VisualizationPlan {
        task: task.to_string(),
        domain_choice: domain,
        hints,
    })
}

pub fn plan_path(plans_dir: &Path, task: &str) -> PathBuf {
    plans_dir.join(format!("{task}.json"))
}

pub fn save_plan(plans_dir: &Path, plan: &StoredPlan) -> Result<PathBuf, PlanError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PlanError::Io { path, source }
    };
    fs::create_dir_all(plans_dir).map_err(io(plans_dir))?;
    let path = plan_path(plans_dir, &plan.plan.task);
    let mut text = serde_json::to_string_pretty(plan).expect("plan serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io(&path))?;
    Ok(path)
}

/// Loads `plans/<task>.json`; `Ok(None)` when it does not exist.
pub fn load_plan(plans_dir: &Path, task: &str) -> Result<Option<StoredPlan>, PlanError> {
    let path = plan_path(plans_dir, task);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(PlanError::Io { path, source }),
    };
    let stored: StoredPlan = serde_json::from_str(&text).map_err(|e| PlanError::Invalid {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if stored.plan.task != task {
        return Err(PlanError::Invalid {
            path,
            message: format!("plan is for task {:?}", stored.plan.task),
        });
    }
    if stored.plan.hints.trim().is_empty() {
        return Err(PlanError::Invalid {
            path,
            message: "hints are empty".into(),
        });
    }
    Ok(Some(stored))
}
