//! Per-sample result records, one JSON line per sample.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::Usage;
use crate::task::{ClassLetter, Modeling, ReasoningStrategy};

use super::EvalError;

/// Identity of one evaluated configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub task: String,
    pub model_id: String,
    pub modeling: Modeling,
    pub strategy: ReasoningStrategy,
}

impl CellKey {
    /// `model/modeling/strategy`, the form baselines are declared in.
    pub fn method(&self) -> String {
        format!("{}/{}/{}", self.model_id, self.modeling, self.strategy)
    }

    pub fn file_name(&self, run_index: u32) -> String {
        let clean = |s: &str| {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
                .collect::<String>()
        };
        format!(
            "{}__{}__{}__{}__run{run_index}.jsonl",
            clean(&self.task),
            clean(&self.model_id),
            self.modeling,
            clean(&self.strategy.to_string())
        )
    }

    fn sort_key(&self) -> (usize, String, String, Modeling, u8, u8) {
        let task_rank = crate::task::BUILTIN_TASKS
            .iter()
            .position(|t| *t == self.task)
            .unwrap_or(usize::MAX);
        let (kind, n) = match self.strategy {
            ReasoningStrategy::Zst => (0, 0),
            ReasoningStrategy::Cot => (1, 0),
            ReasoningStrategy::Icl { demos_per_class } => (2, demos_per_class),
        };
        (task_rank, self.task.clone(), self.model_id.clone(), self.modeling, kind, n)
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub gold: ClassLetter,
    /// `None` when no answer was parsed within the retry cap.
    pub predicted: Option<ClassLetter>,
    pub retries: u32,
    pub usage: Usage,
    pub latency_ms: u64,
    pub response: String,
}

/// One JSONL line: the cell, the run and one sample's outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLine {
    #[serde(flatten)]
    pub cell: CellKey,
    pub seed: u64,
    pub run_index: u32,
    #[serde(flatten)]
    pub outcome: SampleOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub cell: CellKey,
    pub seed: u64,
    pub run_index: u32,
    pub samples: Vec<SampleOutcome>,
}

pub struct RecordFile {
    pub lines: Vec<RecordLine>,
    pub valid_len: u64,
    pub truncated: bool,
}

/// Reads a record file. A final line that is unterminated or does not parse
/// (an interrupted write) is dropped; `valid_len` is the byte length of the
/// content kept.
pub fn read_record_file(path: &Path) -> Result<RecordFile, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    let mut offset = 0usize;
    let mut truncated = false;
    let pieces: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, piece) in pieces.iter().enumerate() {
        let last = i + 1 == pieces.len();
        let complete = piece.ends_with('\n');
        let body = piece.trim_end_matches('\n');
        if body.trim().is_empty() && complete {
            offset += piece.len();
            continue;
        }
        match serde_json::from_str::<RecordLine>(body) {
            Ok(line) if complete => {
                lines.push(line);
                offset += piece.len();
            }
            Ok(_) | Err(_) if last => {
                truncated = true;
                break;
            }
            Err(e) => {
                return Err(EvalError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
            Ok(_) => unreachable!(),
        }
    }
    Ok(RecordFile {
        lines,
        valid_len: offset as u64,
        truncated,
    })
}

pub fn record_line_json(line: &RecordLine) -> String {
    let mut s = serde_json::to_string(line).expect("record serializes");
    s.push('\n');
    s
}

fn jsonl_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            jsonl_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

/// Loads every `*.jsonl` under `dir`, grouped by cell and run, sorted.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, EvalError> {
    let mut files = Vec::new();
    jsonl_files(dir, &mut files)?;
    files.sort();
    let mut groups: BTreeMap<(CellKey, u32), RunRecord> = BTreeMap::new();
    for f in files {
        for line in read_record_file(&f)?.lines {
            let rec = groups
                .entry((line.cell.clone(), line.run_index))
                .or_insert_with(|| RunRecord {
                    cell: line.cell.clone(),
                    seed: line.seed,
                    run_index: line.run_index,
                    samples: Vec::new(),
                });
            rec.samples.push(line.outcome);
        }
    }
    if groups.is_empty() {
        return Err(EvalError::NoRecords(dir.to_path_buf()));
    }
    Ok(groups.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str) -> RecordLine {
        RecordLine {
            cell: CellKey {
                task: "ECG".into(),
                model_id: "gpt-4o".into(),
                modeling: Modeling::Visual,
                strategy: ReasoningStrategy::Icl { demos_per_class: 1 },
            },
            seed: 7,
            run_index: 1,
            outcome: SampleOutcome {
                id: id.into(),
                gold: ClassLetter::from_char('A').unwrap(),
                predicted: None,
                retries: 5,
                usage: Usage::default(),
                latency_ms: 0,
                response: "hm".into(),
            },
        }
    }

    #[test]
    fn file_name_is_safe() {
        assert_eq!(
            line("a").cell.file_name(2),
            "ECG__gpt-4o__visual__icl-1__run2.jsonl"
        );
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let full = record_line_json(&line("a")) + &record_line_json(&line("b"));
        let cut = &full[..full.len() - 10];
        fs::write(&p, cut).unwrap();
        let f = read_record_file(&p).unwrap();
        assert_eq!(f.lines.len(), 1);
        assert!(f.truncated);
        assert_eq!(f.valid_len as usize, record_line_json(&line("a")).len());

        fs::write(&p, format!("garbage\n{full}")).unwrap();
        assert!(matches!(read_record_file(&p), Err(EvalError::Parse { line: 1, .. })));
    }

    #[test]
    fn grouping() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("x.jsonl"),
            record_line_json(&line("a")) + &record_line_json(&line("b")),
        )
        .unwrap();
        let recs = load_records(dir.path()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].samples.len(), 2);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_records(empty.path()), Err(EvalError::NoRecords(_))));
    }
}
