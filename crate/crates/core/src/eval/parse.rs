use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::prompt::{ANSWER_PLACEHOLDER, END_FORMAT};
use crate::task::{ClassLetter, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("no answer choice found")]
    NoAnswer,
    #[error("answer names more than one class: {0:?}")]
    AmbiguousAnswer(Vec<ClassLetter>),
}

static MARKER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)answer\s*choice\s*:").unwrap());
static PAREN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*([A-Za-z])\s*\)").unwrap());
static BARE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[?([A-Z])\]?(?:$|[.):\-])").unwrap());

fn strip_markdown(s: &str) -> String {
    s.replace(['*', '`', '#'], "").replace("__", "").trim().to_string()
}

/// Text after each marker: the rest of its line, or the next non-empty line
/// when the marker ends its line.
fn marker_remainders(response: &str) -> Vec<String> {
    MARKER_RE
        .find_iter(response)
        .map(|m| {
            let rest = &response[m.end()..];
            let mut lines = rest.lines();
            let first = strip_markdown(lines.next().unwrap_or(""));
            if !first.is_empty() {
                return first;
            }
            lines
                .map(strip_markdown)
                .find(|l| !l.is_empty())
                .filter(|l| !l.starts_with(END_FORMAT) && !MARKER_RE.is_match(l))
                .unwrap_or_default()
        })
        .collect()
}

fn distinct(letters: impl IntoIterator<Item = ClassLetter>) -> Result<Option<ClassLetter>, AnswerError> {
    let set: BTreeSet<ClassLetter> = letters.into_iter().collect();
    match set.len() {
        0 => Ok(None),
        1 => Ok(set.into_iter().next()),
        _ => Err(AnswerError::AmbiguousAnswer(set.into_iter().collect())),
    }
}

fn by_name(text: &str, spec: &TaskSpec) -> Result<Option<ClassLetter>, AnswerError> {
    let lower = text.to_lowercase();
    let hits: Vec<(&str, ClassLetter)> = spec
        .classes
        .iter()
        .filter(|c| !c.name.is_empty())
        .filter(|c| {
            let pat = format!(r"(?i)\b{}\b", regex::escape(&c.name));
            Regex::new(&pat).is_ok_and(|re| re.is_match(&lower))
        })
        .map(|c| (c.name.as_str(), c.letter))
        .collect();
    // "walking" inside "walking upstairs" is not a separate mention
    let kept = hits.iter().filter(|(name, _)| {
        !hits
            .iter()
            .any(|(other, _)| other.len() > name.len() && other.to_lowercase().contains(&name.to_lowercase()))
    });
    distinct(kept.map(|(_, l)| *l))
}

fn interpret(remainder: &str, spec: &TaskSpec) -> Result<Option<ClassLetter>, AnswerError> {
    let parens = PAREN_RE
        .captures_iter(remainder)
        .filter_map(|c| c[1].chars().next())
        .filter_map(|c| ClassLetter::from_char(c.to_ascii_uppercase()))
        .filter(|l| spec.has_letter(*l));
    if let Some(l) = distinct(parens)? {
        return Ok(Some(l));
    }
    if let Some(c) = BARE_RE.captures(remainder) {
        if let Some(l) = c[1].chars().next().and_then(ClassLetter::from_char) {
            if spec.has_letter(l) {
                return Ok(Some(l));
            }
        }
    }
    by_name(remainder, spec)
}

/// Extracts the class chosen after the last filled-in "Answer Choice:" marker.
/// Accepts `(X)`, a bare `X`, or a single class name.
pub fn parse_answer(response: &str, spec: &TaskSpec) -> Result<ClassLetter, AnswerError> {
    let remainder = marker_remainders(response)
        .into_iter()
        .rev()
        .find(|r| !r.is_empty() && !r.contains(ANSWER_PLACEHOLDER))
        .ok_or(AnswerError::NoAnswer)?;
    interpret(&remainder, spec)?.ok_or(AnswerError::NoAnswer)
}
