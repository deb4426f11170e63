#![allow(dead_code)]

pub mod golden;

use std::f64::consts::PI;
use std::path::Path;

use timerbed::ingest::{save_dataset, Dataset};
use timerbed::rng::SeededRng;
use timerbed::task::{builtin_task_registry, ClassLetter, Split, TimeSeriesSample};

/// Class `k` is a sinusoid at `k + 1` cycles per series with seeded noise.
pub fn synthetic_sample(task: &str, id: &str, letter: ClassLetter, split: Split, seed: u64) -> TimeSeriesSample {
    let spec = &builtin_task_registry()[task];
    let mut rng = SeededRng::new(seed);
    let cycles = (letter.index() + 1) as f64;
    let l = spec.series_length;
    let values = (0..spec.num_variables)
        .map(|c| {
            let phase = c as f64 * 0.7;
            (0..l)
                .map(|t| {
                    let noise = (rng.below(2001) as f64 - 1000.0) / 10_000.0;
                    let v = (2.0 * PI * cycles * t as f64 / l as f64 + phase).sin() + noise;
                    (v * 1000.0).round() / 1000.0
                })
                .collect()
        })
        .collect();
    TimeSeriesSample {
        id: id.to_string(),
        label: letter,
        values,
        split,
    }
}

pub fn synthetic_dataset(task: &str, train_per_class: usize, test_per_class: usize) -> Dataset {
    let spec = builtin_task_registry()[task].clone();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut seed = 1;
    for letter in spec.letters() {
        for i in 0..train_per_class {
            seed += 1;
            train.push(synthetic_sample(task, &format!("{task}-tr-{}{i}", letter.as_char()), letter, Split::Train, seed));
        }
        for i in 0..test_per_class {
            seed += 1;
            test.push(synthetic_sample(task, &format!("{task}-te-{}{i}", letter.as_char()), letter, Split::Test, seed));
        }
    }
    Dataset { spec, train, test }
}

pub fn write_synthetic(dir: &Path, task: &str, train_per_class: usize, test_per_class: usize) -> Dataset {
    let ds = synthetic_dataset(task, train_per_class, test_per_class);
    save_dataset(&ds, dir).unwrap();
    ds
}

/// Textbook O(n²) DFT; `k * t` is reduced mod `n` before the angle is formed.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re, im)
        })
        .collect()
}

/// Linear chirp sweeping `f0 -> f1` cycles per sample over `len` samples.
pub fn linear_chirp(len: usize, f0: f64, f1: f64) -> Vec<f64> {
    let rate = (f1 - f0) / len as f64;
    (0..len)
        .map(|t| {
            let t = t as f64;
            (2.0 * PI * (f0 * t + 0.5 * rate * t * t)).sin()
        })
        .collect()
}

pub fn sine(len: usize, cycles_per_sample: f64) -> Vec<f64> {
    (0..len).map(|t| (2.0 * PI * cycles_per_sample * t as f64).sin()).collect()
}

pub const E2E_TASKS: [&str; 2] = ["CTU", "HAR"];

/// Sample ids that the mock never answers, so they end as abstentions.
pub const STUBBORN_IDS: [&str; 1] = ["HAR-te-C1"];

/// Lays out datasets, a keyed mock script and a visual run config under
/// `root`; returns the config path.
pub fn e2e_workspace(root: &Path) -> std::path::PathBuf {
    use std::collections::BTreeMap;

    let mut keyed = BTreeMap::new();
    keyed.insert(
        "plan:CTU".to_string(),
        "Keywords: evening peak, standby level, usage duration\nTime-domain visualization is better.".to_string(),
    );
    keyed.insert(
        "plan:HAR".to_string(),
        "1. **Signal magnitude**\n2. **Periodicity**\n3. Axis orientation\n\nTime-domain".to_string(),
    );
    for task in E2E_TASKS {
        let ds = write_synthetic(&root.join("data").join(task), task, 2, 3);
        for (i, s) in ds.test.iter().enumerate() {
            let reply = if STUBBORN_IDS.contains(&s.id.as_str()) {
                "The pattern is unclear to me.".to_string()
            } else if i % 3 == 0 {
                "Looking at the amplitude...\nAnswer Choice: (A)".to_string()
            } else {
                format!("Step 1: inspect.\n**Answer Choice:** ({})", s.label.as_char())
            };
            keyed.insert(format!("{task}:{}", s.id), reply);
        }
    }
    let script = serde_json::json!({ "keyed": keyed });
    std::fs::write(root.join("mock.json"), serde_json::to_string_pretty(&script).unwrap()).unwrap();
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        r#"tasks = ["CTU", "HAR"]
modeling = "visual"
strategies = ["zst", "cot", "icl:1"]
per_class = 2
runs = 3
seed = 7
answer_retry_cap = 3

[render]
width_px = 320
height_px = 240

[[providers]]
kind = "mock"
model_id = "mock-4o"
mock_script = "mock.json"
parallelism = 3
"#,
    )
    .unwrap();
    config
}
