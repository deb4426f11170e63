//! Loading, validating and sampling canonical dataset directories.
//!
//! A dataset directory holds `manifest.json` (a serialized [`TaskSpec`]) and
//! `train.jsonl` / `test.jsonl` with one `{"id", "label", "values"}` object per
//! line. Sample order is file order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::task::{
    builtin_task_registry, ClassLetter, Split, TaskSpec, TimeSeriesSample, MAX_DEMOS_PER_CLASS,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

/// Fraction of samples kept for training when a dataset ships without a test file.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    SchemaViolation {
        file: String,
        line: Option<usize>,
        message: String,
    },
    #[error("sample {id}: expected {what} {expected}, found {actual}")]
    LengthMismatch {
        id: String,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("sample {id}: label {label:?} is not a class of task {task}")]
    UnknownLabel {
        id: String,
        label: String,
        task: String,
    },
    #[error("class {class}: {available} samples available, {requested} requested")]
    InsufficientSamples {
        class: ClassLetter,
        available: usize,
        requested: usize,
    },
    #[error("demos per class must be in 1..={max}, got {0}", max = MAX_DEMOS_PER_CLASS)]
    InvalidDemoCount(usize),
    #[error("per-class count must be at least 1")]
    InvalidPerClass,
    #[error("no sample with id {0}")]
    UnknownSample(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl IngestError {
    fn schema(file: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        IngestError::SchemaViolation {
            file: file.display().to_string(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub train: Vec<TimeSeriesSample>,
    pub test: Vec<TimeSeriesSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSubset {
    pub samples: Vec<TimeSeriesSample>,
    pub seed: u64,
    pub per_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub demos: Vec<(TimeSeriesSample, ClassLetter)>,
    pub demos_per_class: usize,
}

impl DemoSet {
    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

#[derive(Deserialize)]
struct SampleLine {
    id: String,
    label: String,
    values: Vec<Vec<f64>>,
}

impl Dataset {
    /// One-line shape summary, as printed by `timerbed validate`.
    pub fn summary(&self) -> String {
        let s = &self.spec;
        format!(
            "{}: {} classes, {} channels, {} points; train {}, test {}",
            s.name,
            s.num_classes(),
            s.num_variables,
            s.series_length,
            self.train.len(),
            self.test.len()
        )
    }

    pub fn sample(&self, id: &str) -> Option<&TimeSeriesSample> {
        self.train.iter().chain(&self.test).find(|s| s.id == id)
    }

    pub fn split(&self, split: Split) -> &[TimeSeriesSample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Checks that a sample has the spec's shape, a known label and finite values.
    pub fn check_sample(spec: &TaskSpec, sample: &TimeSeriesSample) -> Result<(), IngestError> {
        if sample.num_channels() != spec.num_variables {
            return Err(IngestError::LengthMismatch {
                id: sample.id.clone(),
                what: "channel count",
                expected: spec.num_variables,
                actual: sample.num_channels(),
            });
        }
        for channel in &sample.values {
            if channel.len() != spec.series_length {
                return Err(IngestError::LengthMismatch {
                    id: sample.id.clone(),
                    what: "series length",
                    expected: spec.series_length,
                    actual: channel.len(),
                });
            }
        }
        if !spec.has_letter(sample.label) {
            return Err(IngestError::UnknownLabel {
                id: sample.id.clone(),
                label: sample.label.to_string(),
                task: spec.name.clone(),
            });
        }
        Ok(())
    }
}

fn read_manifest(dir: &Path) -> Result<TaskSpec, IngestError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(IngestError::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|source| IngestError::Io {
        path: path.clone(),
        source,
    })?;
    let spec: TaskSpec = serde_json::from_str(&text)
        .map_err(|e| IngestError::schema(&path, Some(e.line()), e.to_string()))?;
    spec.validate()
        .map_err(|e| IngestError::schema(&path, None, e.to_string()))?;

    if let Some(builtin) = builtin_task_registry().get(&spec.name) {
        let expected = (builtin.num_variables, builtin.series_length, builtin.num_classes());
        let found = (spec.num_variables, spec.series_length, spec.num_classes());
        if expected != found {
            return Err(IngestError::schema(
                &path,
                None,
                format!(
                    "built-in task {} has (variables, length, classes) = {expected:?}, manifest declares {found:?}",
                    spec.name
                ),
            ));
        }
    }
    Ok(spec)
}

fn read_split(
    path: &Path,
    spec: &TaskSpec,
    split: Split,
) -> Result<Vec<TimeSeriesSample>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: SampleLine = serde_json::from_str(line)
            .map_err(|e| IngestError::schema(path, Some(line_no), e.to_string()))?;
        let label = raw
            .label
            .parse::<ClassLetter>()
            .ok()
            .filter(|l| spec.has_letter(*l))
            .ok_or_else(|| IngestError::UnknownLabel {
                id: raw.id.clone(),
                label: raw.label.clone(),
                task: spec.name.clone(),
            })?;
        if raw.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(IngestError::schema(
                path,
                Some(line_no),
                format!("sample {} contains a non-finite value", raw.id),
            ));
        }
        let sample = TimeSeriesSample {
            id: raw.id,
            label,
            values: raw.values,
            split,
        };
        Dataset::check_sample(spec, &sample)?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Loads and validates a canonical dataset directory. When `test.jsonl` is
/// absent the training file is split 80/20 with [`split_by_id_hash`].
pub fn load_dataset(dir: &Path) -> Result<Dataset, IngestError> {
    let spec = read_manifest(dir)?;
    let train_path = dir.join(TRAIN_FILE);
    if !train_path.is_file() {
        return Err(IngestError::MissingFile(train_path));
    }
    let test_path = dir.join(TEST_FILE);
    let (train, test) = if test_path.is_file() {
        (
            read_split(&train_path, &spec, Split::Train)?,
            read_split(&test_path, &spec, Split::Test)?,
        )
    } else {
        let all = read_split(&train_path, &spec, Split::Train)?;
        split_by_id_hash(all, DEFAULT_TRAIN_FRACTION)
    };

    let mut seen = HashSet::new();
    for s in train.iter().chain(&test) {
        if !seen.insert(s.id.as_str()) {
            let file = match s.split {
                Split::Train => &train_path,
                Split::Test => &test_path,
            };
            return Err(IngestError::schema(
                file,
                None,
                format!("duplicate sample id {}", s.id),
            ));
        }
    }
    Ok(Dataset { spec, train, test })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_split(path: &Path, samples: &[TimeSeriesSample]) -> Result<(), IngestError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("samples serialize");
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Writes `dataset` in the canonical format. Floats use shortest round-trip
/// decimal notation.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&dataset.spec).expect("spec serializes");
    text.push('\n');
    fs::write(&manifest, text).map_err(io_err(&manifest))?;
    write_split(&dir.join(TRAIN_FILE), &dataset.train)?;
    write_split(&dir.join(TEST_FILE), &dataset.test)
}

/// SHA-256 over the manifest and split files, hex encoded. Used as the dataset
/// part of a run's identity.
pub fn dataset_digest(dir: &Path) -> Result<String, IngestError> {
    let mut hasher = Sha256::new();
    for name in [MANIFEST_FILE, TRAIN_FILE, TEST_FILE] {
        let path = dir.join(name);
        if path.is_file() {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            hasher.update(name.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

fn id_hash(id: &str) -> [u8; 32] {
    Sha256::digest(id.as_bytes()).into()
}

/// Deterministic train/test split: samples are ranked by SHA-256 of their id
/// and the lowest `round(fraction * n)` go to train. Each side keeps file order.
pub fn split_by_id_hash(
    samples: Vec<TimeSeriesSample>,
    train_fraction: f64,
) -> (Vec<TimeSeriesSample>, Vec<TimeSeriesSample>) {
    let n_train = (train_fraction.clamp(0.0, 1.0) * samples.len() as f64).round() as usize;
    let mut ranked: Vec<(usize, [u8; 32])> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, id_hash(&s.id)))
        .collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let train_idx: HashSet<usize> = ranked.iter().take(n_train).map(|(i, _)| *i).collect();

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(samples.len() - n_train);
    for (i, mut s) in samples.into_iter().enumerate() {
        if train_idx.contains(&i) {
            s.split = Split::Train;
            train.push(s);
        } else {
            s.split = Split::Test;
            test.push(s);
        }
    }
    (train, test)
}

/// Groups a split by class (in class order), each group in file order.
fn by_class<'a>(
    spec: &TaskSpec,
    samples: &'a [TimeSeriesSample],
) -> BTreeMap<ClassLetter, Vec<&'a TimeSeriesSample>> {
    let mut groups: BTreeMap<ClassLetter, Vec<&TimeSeriesSample>> =
        spec.letters().map(|l| (l, Vec::new())).collect();
    for s in samples {
        if let Some(g) = groups.get_mut(&s.label) {
            g.push(s);
        }
    }
    groups
}

fn pick_per_class<'a>(
    spec: &TaskSpec,
    samples: &'a [TimeSeriesSample],
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<&'a TimeSeriesSample>>, IngestError> {
    let mut picked = Vec::new();
    for (class, mut group) in by_class(spec, samples) {
        if group.len() < count {
            return Err(IngestError::InsufficientSamples {
                class,
                available: group.len(),
                requested: count,
            });
        }
        rng.shuffle(&mut group);
        group.truncate(count);
        picked.push(group);
    }
    Ok(picked)
}

/// Class-balanced subset of the test split: `per_class` samples from each
/// class, the combined list shuffled. Deterministic in `(seed, dataset)`.
pub fn draw_eval_subset(
    dataset: &Dataset,
    per_class: usize,
    seed: u64,
) -> Result<EvalSubset, IngestError> {
    if per_class == 0 {
        return Err(IngestError::InvalidPerClass);
    }
    let mut rng = SeededRng::new(seed);
    let mut samples: Vec<TimeSeriesSample> =
        pick_per_class(&dataset.spec, &dataset.test, per_class, &mut rng)?
            .into_iter()
            .flatten()
            .cloned()
            .collect();
    rng.shuffle(&mut samples);
    Ok(EvalSubset {
        samples,
        seed,
        per_class,
    })
}

/// Class-balanced demonstrations from the train split, interleaved
/// round-robin in class order (`A, B, ..., A, B, ...`).
pub fn draw_demo_set(
    dataset: &Dataset,
    demos_per_class: usize,
    seed: u64,
) -> Result<DemoSet, IngestError> {
    if !(1..=MAX_DEMOS_PER_CLASS as usize).contains(&demos_per_class) {
        return Err(IngestError::InvalidDemoCount(demos_per_class));
    }
    let mut rng = SeededRng::new(seed);
    let groups = pick_per_class(&dataset.spec, &dataset.train, demos_per_class, &mut rng)?;
    let mut demos = Vec::with_capacity(groups.len() * demos_per_class);
    for round in 0..demos_per_class {
        for group in &groups {
            let s = group[round];
            demos.push((s.clone(), s.label));
        }
    }
    Ok(DemoSet {
        demos,
        demos_per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::builtin_task_registry;

    fn sample(id: &str, label: char, d: usize, l: usize, split: Split) -> TimeSeriesSample {
        TimeSeriesSample {
            id: id.into(),
            label: ClassLetter::from_char(label).unwrap(),
            values: (0..d)
                .map(|c| (0..l).map(|t| (c * 1000 + t) as f64 * 0.5).collect())
                .collect(),
            split,
        }
    }

    fn synthetic(task: &str, train_per_class: usize, test_per_class: usize) -> Dataset {
        let spec = builtin_task_registry()[task].clone();
        let (d, l) = (spec.num_variables, spec.series_length);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for letter in spec.letters() {
            for i in 0..train_per_class {
                train.push(sample(&format!("tr-{letter}-{i}"), letter.as_char(), d, l, Split::Train));
            }
            for i in 0..test_per_class {
                test.push(sample(&format!("te-{letter}-{i}"), letter.as_char(), d, l, Split::Test));
            }
        }
        Dataset { spec, train, test }
    }

    #[test]
    fn eval_subset_balanced_and_deterministic() {
        let ds = synthetic("CTU", 3, 6);
        let a = draw_eval_subset(&ds, 4, 7).unwrap();
        assert_eq!(a.samples.len(), 8);
        let b_count = a.samples.iter().filter(|s| s.label.as_char() == 'B').count();
        assert_eq!(b_count, 4);
        let b = draw_eval_subset(&ds, 4, 7).unwrap();
        let ids = |s: &EvalSubset| s.samples.iter().map(|x| x.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        let c = draw_eval_subset(&ds, 4, 8).unwrap();
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn eval_subset_insufficient() {
        let ds = synthetic("CTU", 3, 2);
        let err = draw_eval_subset(&ds, 3, 0).unwrap_err();
        assert!(matches!(
            err,
            IngestError::InsufficientSamples { available: 2, requested: 3, .. }
        ));
        assert!(matches!(draw_eval_subset(&ds, 0, 0), Err(IngestError::InvalidPerClass)));
    }

    #[test]
    fn demo_set_round_robin() {
        let ds = synthetic("HAR", 4, 1);
        let demos = draw_demo_set(&ds, 2, 0).unwrap();
        assert_eq!(demos.len(), 12);
        let letters: String = demos.demos.iter().map(|(_, l)| l.as_char()).collect();
        assert_eq!(letters, "ABCDEFABCDEF");
        assert!(demos.demos.iter().all(|(s, l)| s.label == *l && s.split == Split::Train));

        let rcw = synthetic("RCW", 2, 1);
        let one = draw_demo_set(&rcw, 1, 0).unwrap();
        assert_eq!(one.len(), 2);
    }

    #[test]
    fn demo_set_count_bounds() {
        let ds = synthetic("RCW", 7, 1);
        assert!(matches!(draw_demo_set(&ds, 0, 0), Err(IngestError::InvalidDemoCount(0))));
        assert!(matches!(draw_demo_set(&ds, 7, 0), Err(IngestError::InvalidDemoCount(7))));
        let small = synthetic("RCW", 1, 1);
        assert!(matches!(
            draw_demo_set(&small, 2, 0),
            Err(IngestError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn hash_split_is_stable() {
        let samples: Vec<_> = (0..10)
            .map(|i| sample(&format!("s{i}"), 'A', 1, 3, Split::Train))
            .collect();
        let (train, test) = split_by_id_hash(samples.clone(), 0.8);
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        assert!(test.iter().all(|s| s.split == Split::Test));
        let (train2, _) = split_by_id_hash(samples, 0.8);
        assert_eq!(train, train2);
        // file order preserved within a side
        let positions: Vec<usize> = train
            .iter()
            .map(|s| s.id[1..].parse::<usize>().unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}
