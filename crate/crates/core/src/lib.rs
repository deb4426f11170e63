//! Evaluation harness for time-series reasoning with language models: dataset
//! ingestion, rendering, prompt construction, provider clients, scoring and
//! reporting.

pub mod anchors;
pub mod config;
pub mod eval;
pub mod ingest;
pub mod llm;
pub mod prompt;
pub mod rng;
pub mod runner;
pub mod task;
pub mod viz;
