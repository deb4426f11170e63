//! Shared domain types and the built-in registry of the six TimerBed tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Canonical class identifier: an uppercase ASCII letter `A`, `B`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLetter(u8);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid class letter {0:?}")]
pub struct InvalidLetter(pub String);

impl ClassLetter {
    pub fn from_char(c: char) -> Option<Self> {
        c.is_ascii_uppercase().then_some(ClassLetter(c as u8))
    }

    /// The letter at zero-based position `index` (0 → `A`).
    pub fn from_index(index: usize) -> Option<Self> {
        (index < 26).then(|| ClassLetter(b'A' + index as u8))
    }

    pub fn index(self) -> usize {
        (self.0 - b'A') as usize
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }
}

impl fmt::Display for ClassLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for ClassLetter {
    type Err = InvalidLetter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => ClassLetter::from_char(c).ok_or_else(|| InvalidLetter(s.into())),
            _ => Err(InvalidLetter(s.into())),
        }
    }
}

impl Serialize for ClassLetter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassLetter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// One labeled multivariate series. `values[channel][time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSample {
    pub id: String,
    pub label: ClassLetter,
    pub values: Vec<Vec<f64>>,
    #[serde(skip)]
    pub split: Split,
}

impl TimeSeriesSample {
    pub fn num_channels(&self) -> usize {
        self.values.len()
    }

    /// Series length; zero when the sample has no channels.
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningPattern {
    SimpleDeterministic,
    ComplexDeterministic,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub letter: ClassLetter,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub pattern: ReasoningPattern,
    pub task_description: String,
    pub classes: Vec<ClassInfo>,
    pub num_variables: usize,
    pub series_length: usize,
    pub variable_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("task {0} has no classes")]
    NoClasses(String),
    #[error("class {position} of task {task} has letter {found}, expected {expected}")]
    LetterOrder {
        task: String,
        position: usize,
        expected: ClassLetter,
        found: ClassLetter,
    },
    #[error("task {task}: {field} must be at least 1")]
    ZeroDimension { task: String, field: &'static str },
    #[error("task {task}: {labels} variable labels for {variables} variables")]
    LabelCount {
        task: String,
        labels: usize,
        variables: usize,
    },
    #[error("task {0}: sampling_rate_hz must be positive and finite")]
    SamplingRate(String),
}

impl TaskSpec {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, letter: ClassLetter) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.letter == letter)
    }

    pub fn has_letter(&self, letter: ClassLetter) -> bool {
        self.class(letter).is_some()
    }

    pub fn letters(&self) -> impl Iterator<Item = ClassLetter> + '_ {
        self.classes.iter().map(|c| c.letter)
    }

    /// Checks the structural invariants: non-empty classes lettered `A, B, ...`
    /// in order, positive dimensions, one label per variable.
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.classes.is_empty() {
            return Err(SpecError::NoClasses(self.name.clone()));
        }
        for (i, class) in self.classes.iter().enumerate() {
            let expected = ClassLetter::from_index(i).ok_or_else(|| SpecError::LetterOrder {
                task: self.name.clone(),
                position: i,
                expected: ClassLetter(b'Z'),
                found: class.letter,
            })?;
            if class.letter != expected {
                return Err(SpecError::LetterOrder {
                    task: self.name.clone(),
                    position: i,
                    expected,
                    found: class.letter,
                });
            }
        }
        if self.num_variables == 0 {
            return Err(SpecError::ZeroDimension {
                task: self.name.clone(),
                field: "num_variables",
            });
        }
        if self.series_length == 0 {
            return Err(SpecError::ZeroDimension {
                task: self.name.clone(),
                field: "series_length",
            });
        }
        if self.variable_labels.len() != self.num_variables {
            return Err(SpecError::LabelCount {
                task: self.name.clone(),
                labels: self.variable_labels.len(),
                variables: self.num_variables,
            });
        }
        if let Some(hz) = self.sampling_rate_hz {
            if !(hz.is_finite() && hz > 0.0) {
                return Err(SpecError::SamplingRate(self.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReasoningStrategy {
    Zst,
    Cot,
    Icl { demos_per_class: u8 },
}

pub const MAX_DEMOS_PER_CLASS: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown reasoning strategy {0:?} (expected zst, cot or icl:<1..=6>)")]
pub struct ParseStrategyError(pub String);

impl ReasoningStrategy {
    pub fn icl(demos_per_class: u8) -> Option<Self> {
        (1..=MAX_DEMOS_PER_CLASS)
            .contains(&demos_per_class)
            .then_some(ReasoningStrategy::Icl { demos_per_class })
    }

    pub fn demos_per_class(self) -> Option<u8> {
        match self {
            ReasoningStrategy::Icl { demos_per_class } => Some(demos_per_class),
            _ => None,
        }
    }
}

impl fmt::Display for ReasoningStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReasoningStrategy::Zst => f.write_str("zst"),
            ReasoningStrategy::Cot => f.write_str("cot"),
            ReasoningStrategy::Icl { demos_per_class } => write!(f, "icl:{demos_per_class}"),
        }
    }
}

impl FromStr for ReasoningStrategy {
    type Err = ParseStrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "zst" => Ok(ReasoningStrategy::Zst),
            "cot" => Ok(ReasoningStrategy::Cot),
            other => other
                .strip_prefix("icl")
                .map(|rest| rest.trim_start_matches([':', '(']).trim_end_matches(')'))
                .and_then(|n| n.parse::<u8>().ok())
                .and_then(ReasoningStrategy::icl)
                .ok_or_else(|| ParseStrategyError(s.to_string())),
        }
    }
}

impl Serialize for ReasoningStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReasoningStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the series reaches the model: serialized numbers or a rendered picture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modeling {
    Numeric,
    Visual,
}

impl fmt::Display for Modeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modeling::Numeric => "numeric",
            Modeling::Visual => "visual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub raw_response: String,
    pub parsed_choice: Option<ClassLetter>,
    pub retries_used: u32,
}

fn class(letter: u8, name: &str, description: &str) -> ClassInfo {
    ClassInfo {
        letter: ClassLetter(letter),
        name: name.to_string(),
        description: description.to_string(),
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

const RCW_DESCRIPTION: &str =
    "Play the role of a marine biology expert: is there a right whale call in the record?";

const TEE_DESCRIPTION: &str = "Based on the power density time series data and select the transient electromagnetic event that best matches. The FORTE satellite detects transient electromagnetic events associated with lightning using a suite of optical and radio-frequency (RF) instruments. There are 7 event types. CG Positive Initial Return Stroke: A positive charge is lowered from a cloud to the ground. The characteristic feature of this type of event in the power density time series is a sharp turn-on of radiation, followed by a few hundreds of microseconds of noise; IR Negative Initial Return Stroke: A negative charge is lowered from a cloud to ground. The power waveform slowly ramps up to a level known as an attachment point, where a large surge current causes the VHF power to 'spike'. This attachment is followed by an exponentially shaped decline in the waveform.; SR Subsequent Negative Return Stroke: A negative charge is lowered from a cloud to ground. As the name implies, subsequent return strokes come after initial return strokes. Note that subsequent positive return strokes don't exist. I Impulsive Event: Typically an intra-cloud event characterized by a sudden peak in the waveform. I2 Impulsive Event Pair: Another intra-cloud event characterized by sudden peaks in the waveform that come in closely separated pairs. These are also called TIPPs (Trans-Ionospheric Pulse Pairs). KM Gradual Intra-Cloud Stroke: An intra-cloud event which increases in power more gradually than an impulsive event. O Off-record: 800 microseconds was not enough to fully capture the lightning event.";

const ECG_DESCRIPTION: &str = "As a cardiologist, you are tasked with classifying a patient's heart condition based on single-lead ECG recordings.";

const EMG_DESCRIPTION: &str = "As an Electromyograms (EMG) analysis expert, you are tasked with determining the type of the subject based on the EMG record.";

const CTU_DESCRIPTION: &str = "Play as a computer energy consumption analysis expert, please correctly determine whether this computer is a desktop or a laptop based on the 24-hour power consumption data.";

const HAR_DESCRIPTION: &str = "As a human activity recognition expert, you are tasked with determining the type of activity performed by the subject based on the accelerometer record series along the x, y, and z axes over time.";

/// Names of the built-in tasks in canonical (table) order.
pub const BUILTIN_TASKS: [&str; 6] = ["RCW", "TEE", "ECG", "EMG", "CTU", "HAR"];

/// The six built-in task specifications keyed by name.
///
/// Class order follows the label order of the public source datasets. Sampling
/// rates are set only where the source rate is fixed and known (RCW 2 kHz clips,
/// ECG 300 Hz, EMG 4 kHz); other tasks plot against sample indices.
pub fn builtin_task_registry() -> BTreeMap<String, TaskSpec> {
    let specs = vec![
        TaskSpec {
            name: "RCW".into(),
            pattern: ReasoningPattern::SimpleDeterministic,
            task_description: RCW_DESCRIPTION.into(),
            classes: vec![
                class(b'A', "no right whale call", "the record contains only ambient ocean noise"),
                class(b'B', "right whale call", "the record contains an up-call from a right whale"),
            ],
            num_variables: 1,
            series_length: 4000,
            variable_labels: labels(&["amplitude"]),
            sampling_rate_hz: Some(2000.0),
        },
        TaskSpec {
            name: "TEE".into(),
            pattern: ReasoningPattern::SimpleDeterministic,
            task_description: TEE_DESCRIPTION.into(),
            classes: vec![
                class(b'A', "CG Positive Initial Return Stroke", ""),
                class(b'B', "IR Negative Initial Return Stroke", ""),
                class(b'C', "SR Subsequent Negative Return Stroke", ""),
                class(b'D', "I Impulsive Event", ""),
                class(b'E', "I2 Impulsive Event Pair", ""),
                class(b'F', "KM Gradual Intra-Cloud Stroke", ""),
                class(b'G', "O Off-record", ""),
            ],
            num_variables: 1,
            series_length: 319,
            variable_labels: labels(&["power density"]),
            sampling_rate_hz: None,
        },
        TaskSpec {
            name: "ECG".into(),
            pattern: ReasoningPattern::ComplexDeterministic,
            task_description: ECG_DESCRIPTION.into(),
            classes: vec![
                class(b'A', "normal sinus rhythm", ""),
                class(b'B', "fibrillation", ""),
                class(b'C', "alternative rhythm", ""),
                class(b'D', "too noisy to be classified", ""),
            ],
            num_variables: 1,
            series_length: 1500,
            variable_labels: labels(&["ECG"]),
            sampling_rate_hz: Some(300.0),
        },
        TaskSpec {
            name: "EMG".into(),
            pattern: ReasoningPattern::ComplexDeterministic,
            task_description: EMG_DESCRIPTION.into(),
            classes: vec![
                class(b'A', "healthy", ""),
                class(b'B', "neuropathy", ""),
                class(b'C', "myopathy", ""),
            ],
            num_variables: 1,
            series_length: 1500,
            variable_labels: labels(&["EMG"]),
            sampling_rate_hz: Some(4000.0),
        },
        TaskSpec {
            name: "CTU".into(),
            pattern: ReasoningPattern::Probabilistic,
            task_description: CTU_DESCRIPTION.into(),
            classes: vec![
                class(b'A', "desktop", ""),
                class(b'B', "laptop", ""),
            ],
            num_variables: 1,
            series_length: 720,
            variable_labels: labels(&["power"]),
            sampling_rate_hz: None,
        },
        TaskSpec {
            name: "HAR".into(),
            pattern: ReasoningPattern::Probabilistic,
            task_description: HAR_DESCRIPTION.into(),
            classes: vec![
                class(b'A', "walking", ""),
                class(b'B', "walking upstairs", ""),
                class(b'C', "walking downstairs", ""),
                class(b'D', "sitting", ""),
                class(b'E', "standing", ""),
                class(b'F', "lying", ""),
            ],
            num_variables: 3,
            series_length: 206,
            variable_labels: labels(&["x", "y", "z"]),
            sampling_rate_hz: None,
        },
    ];
    specs.into_iter().map(|s| (s.name.clone(), s)).collect()
}
