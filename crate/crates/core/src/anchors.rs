//! Reference accuracies used to quantify LLM results: random guessing and
//! eight supervised time-series models per task.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::builtin_task_registry;

/// Supervised anchor models in table order.
pub const SUPERVISED_MODELS: [&str; 8] = [
    "Transformer",
    "Autoformer",
    "Informer",
    "FEDformer",
    "PatchTST",
    "iTransformer",
    "TimesNet",
    "DLinear",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedAnchor {
    pub model: String,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnchors {
    pub random_guess_accuracy: f64,
    pub supervised: Vec<SupervisedAnchor>,
}

impl TaskAnchors {
    pub fn supervised(&self, model: &str) -> Option<f64> {
        self.supervised
            .iter()
            .find(|a| a.model == model)
            .map(|a| a.accuracy_pct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct AnchorTable {
    pub tasks: BTreeMap<String, TaskAnchors>,
}

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("cannot read anchor file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid anchor file {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("task {task}: accuracy {value} outside [0, 100]")]
    OutOfRange { task: String, value: f64 },
}

impl AnchorTable {
    pub fn get(&self, task: &str) -> Option<&TaskAnchors> {
        self.tasks.get(task)
    }

    /// Loads a JSON anchor table (`{"TASK": {random_guess_accuracy, supervised: [...]}}`)
    /// and lays it over `self`; tasks in the file replace existing entries.
    pub fn with_overrides(mut self, path: &Path) -> Result<Self, AnchorError> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| AnchorError::Io {
            path: display.clone(),
            source,
        })?;
        let overrides: AnchorTable =
            serde_json::from_str(&text).map_err(|source| AnchorError::Parse {
                path: display,
                source,
            })?;
        overrides.check_ranges()?;
        self.tasks.extend(overrides.tasks);
        Ok(self)
    }

    fn check_ranges(&self) -> Result<(), AnchorError> {
        for (task, anchors) in &self.tasks {
            let values = std::iter::once(anchors.random_guess_accuracy)
                .chain(anchors.supervised.iter().map(|a| a.accuracy_pct));
            for value in values {
                if !(0.0..=100.0).contains(&value) {
                    return Err(AnchorError::OutOfRange {
                        task: task.clone(),
                        value,
                    });
                }
            }
        }
        Ok(())
    }
}

const SUPERVISED_ACCURACY: [(&str, [f64; 8]); 6] = [
    ("RCW", [64.12, 62.59, 75.51, 76.59, 82.11, 76.92, 80.23, 56.96]),
    ("TEE", [59.52, 26.19, 59.52, 42.86, 57.14, 21.43, 61.90, 47.63]),
    ("ECG", [25.00, 23.95, 22.39, 26.40, 24.82, 24.48, 26.20, 23.61]),
    ("EMG", [86.67, 46.67, 66.66, 73.33, 60.00, 46.67, 73.33, 46.67]),
    ("CTU", [59.20, 67.20, 67.20, 51.60, 64.00, 46.40, 64.00, 52.40]),
    ("HAR", [87.26, 75.04, 85.83, 89.88, 79.60, 89.49, 88.65, 48.97]),
];

/// Random guessing (`100 / num_classes`, unrounded) and the supervised model
/// accuracies for the six built-in tasks.
pub fn builtin_anchor_table() -> AnchorTable {
    let registry = builtin_task_registry();
    let tasks = SUPERVISED_ACCURACY
        .iter()
        .map(|(task, accs)| {
            let classes = registry[*task].num_classes();
            let supervised = SUPERVISED_MODELS
                .iter()
                .zip(accs)
                .map(|(model, acc)| SupervisedAnchor {
                    model: model.to_string(),
                    accuracy_pct: *acc,
                })
                .collect();
            (
                task.to_string(),
                TaskAnchors {
                    random_guess_accuracy: 100.0 / classes as f64,
                    supervised,
                },
            )
        })
        .collect();
    AnchorTable { tasks }
}
