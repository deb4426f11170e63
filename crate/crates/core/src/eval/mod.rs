//! Answer parsing, metrics, run records and reports.

pub mod metrics;
pub mod parse;
pub mod record;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use metrics::{accuracy, cost, improvement, mean, normalize, round_to, win_count};
pub use parse::{parse_answer, AnswerError};
pub use record::{load_records, CellKey, RecordLine, RunRecord, SampleOutcome};
pub use report::{build_report, write_report, Report, ReportFormat, ReportOptions, ReportRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("task {0} has no anchors")]
    UnknownTask(String),
    #[error("baseline accuracy is zero")]
    ZeroBaseline,
    #[error("run record has no samples")]
    EmptyRecord,
    #[error("no records found under {0}")]
    NoRecords(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("chart rendering failed: {0}")]
    Chart(String),
}
