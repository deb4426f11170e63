//! Prompt construction: numeric serialization, the zero-shot, chain-of-thought
//! and in-context templates, and the two-stage plan/solve prompts.

pub mod numeric;
pub mod plan;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::task::{ClassLetter, Modeling, ReasoningStrategy, TaskSpec};
use crate::viz::RenderedImage;

pub use numeric::{format_significant, serialize_numeric, DEFAULT_PRECISION, MAX_PRECISION};
pub use plan::{
    load_plan, parse_plan, plan_path, save_plan, PlanError, PlanFallback, PlanSource, StoredPlan,
    VisualizationPlan,
};

pub const COT_INSTRUCTION: &str = "Please solve this problem step by step.";
pub const BEGIN_FORMAT: &str = "---BEGIN FORMAT TEMPLATE---";
pub const END_FORMAT: &str = "---END FORMAT TEMPLATE---";
pub const ANSWER_MARKER: &str = "Answer Choice:";
pub const ANSWER_PLACEHOLDER: &str = "[Your Answer Choice Here]";
pub const HINT_PREFIX: &str = "Consider characteristics including";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("precision must be between 1 and {max} significant digits, got {0}", max = MAX_PRECISION)]
    InvalidPrecision(u8),
    #[error("task {0} needs at least two classes")]
    TooFewClasses(String),
    #[error("in-context prompts need at least one demonstration")]
    NoDemos,
    #[error("demo {id} is labeled {letter}, which task {task} does not define")]
    DemoLabel {
        id: String,
        letter: ClassLetter,
        task: String,
    },
    #[error("plan is for task {plan}, prompt is for task {task}")]
    PlanMismatch { plan: String, task: String },
    #[error("mixed modeling: {0}")]
    ModelingMismatch(String),
    #[error("bundle invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image(RenderedImage),
}

impl Part {
    fn modeling(&self) -> Modeling {
        match self {
            Part::Text(_) => Modeling::Numeric,
            Part::Image(_) => Modeling::Visual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Planning,
    Answer,
}

/// A fully materialized request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub parts: Vec<Part>,
    pub strategy: ReasoningStrategy,
    pub modeling: Modeling,
    pub task: String,
    pub stage: Stage,
    /// Id of the sample being classified, for answer-stage bundles.
    pub target_id: Option<String>,
    pub demo_ids: Vec<String>,
}

impl PromptBundle {
    /// All text parts concatenated in order.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect()
    }

    pub fn images(&self) -> impl Iterator<Item = &RenderedImage> {
        self.parts.iter().filter_map(|p| match p {
            Part::Image(i) => Some(i),
            Part::Text(_) => None,
        })
    }

    pub fn image_count(&self) -> usize {
        self.images().count()
    }

    /// SHA-256 over exactly what is sent: part kinds, text, image bytes and
    /// detail.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in &self.parts {
            match part {
                Part::Text(t) => {
                    h.update(b"T");
                    h.update((t.len() as u64).to_le_bytes());
                    h.update(t.as_bytes());
                }
                Part::Image(img) => {
                    h.update(b"I");
                    h.update(img.detail.to_string().as_bytes());
                    h.update((img.png_bytes.len() as u64).to_le_bytes());
                    h.update(&img.png_bytes);
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn check_invariants(&self) -> Result<(), PromptError> {
        if self.parts.is_empty() {
            return Err(PromptError::Invariant("bundle is empty".into()));
        }
        if self.stage == Stage::Planning {
            return if self.image_count() == 0 {
                Ok(())
            } else {
                Err(PromptError::Invariant("planning prompt carries an image".into()))
            };
        }
        let images = self.image_count();
        match self.modeling {
            Modeling::Visual if images == 0 => {
                return Err(PromptError::Invariant("visual bundle without image".into()))
            }
            Modeling::Numeric if images > 0 => {
                return Err(PromptError::Invariant("numeric bundle with image".into()))
            }
            _ => {}
        }
        let text = self.text();
        let blocks = text.matches(BEGIN_FORMAT).count();
        if blocks != 1 || text.matches(END_FORMAT).count() != 1 {
            return Err(PromptError::Invariant(format!(
                "expected one answer-format block, found {blocks}"
            )));
        }
        if !text.trim_end().ends_with("Repeat the format template for the answer.") {
            return Err(PromptError::Invariant("answer-format block is not final".into()));
        }
        Ok(())
    }
}

/// One labeled demonstration, already turned into its data part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoInput {
    pub id: String,
    pub data: Part,
    pub answer: ClassLetter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demos {
    pub items: Vec<DemoInput>,
    pub demos_per_class: u8,
}

/// `(A) name: description; (B) ...`, or just `(A) name` when a class has no
/// description.
pub fn class_choices(spec: &TaskSpec) -> String {
    spec.classes
        .iter()
        .map(|c| {
            if c.description.is_empty() {
                format!("({}) {}", c.letter, c.name)
            } else {
                format!("({}) {}: {}", c.letter, c.name, c.description)
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn count_word(n: usize) -> String {
    match n {
        2 => "two".into(),
        3 => "three".into(),
        4 => "four".into(),
        5 => "five".into(),
        6 => "six".into(),
        7 => "seven".into(),
        8 => "eight".into(),
        9 => "nine".into(),
        10 => "ten".into(),
        n => n.to_string(),
    }
}

fn english_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [a] => a.to_string(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

const FORMAT_BLOCK: [&str; 6] = [
    "Please respond with the following format:",
    BEGIN_FORMAT,
    "Answer Choice: [Your Answer Choice Here]",
    END_FORMAT,
    "Do not deviate from the above format. ",
    "Repeat the format template for the answer.",
];

fn format_block(indent: &str) -> String {
    FORMAT_BLOCK
        .iter()
        .map(|l| format!("{indent}{l}\n"))
        .collect()
}

fn question_block(spec: &TaskSpec, cot: bool) -> String {
    let mut s = format!(
        "Given the time series data above, \nanswer the following question\nusing the specified format.\n    Question: {}\n    Choices: {}\n",
        spec.task_description,
        class_choices(spec)
    );
    if cot {
        s.push_str("    ");
        s.push_str(COT_INSTRUCTION);
        s.push('\n');
    }
    s.push_str(&format_block("    "));
    s
}

fn demo_block(spec: &TaskSpec, answer: ClassLetter) -> String {
    format!(
        "    Given the time series data above, \n    answer the following question\n    using the specified format.\n    Question: {}\n    Choices: {}\n    Answer Choice: ({answer})\n",
        spec.task_description,
        class_choices(spec)
    )
}

/// Accumulates parts, merging adjacent text. Numeric data is inlined as
/// `"<data>. \n"`; an image takes the place of that whole line.
#[derive(Default)]
struct PartsBuilder {
    parts: Vec<Part>,
}

impl PartsBuilder {
    fn text(&mut self, s: &str) {
        if let Some(Part::Text(last)) = self.parts.last_mut() {
            last.push_str(s);
        } else {
            self.parts.push(Part::Text(s.to_string()));
        }
    }

    fn data(&mut self, part: &Part) {
        match part {
            Part::Text(t) => {
                self.text(t);
                self.text(". \n");
            }
            Part::Image(img) => self.parts.push(Part::Image(img.clone())),
        }
    }

    fn finish(self) -> Vec<Part> {
        self.parts
            .into_iter()
            .filter(|p| !matches!(p, Part::Text(t) if t.trim().is_empty()))
            .collect()
    }
}

fn check_classes(spec: &TaskSpec) -> Result<(), PromptError> {
    if spec.num_classes() < 2 {
        return Err(PromptError::TooFewClasses(spec.name.clone()));
    }
    Ok(())
}

fn check_demos(demos: &Demos, spec: &TaskSpec, modeling: Modeling) -> Result<(), PromptError> {
    if demos.items.is_empty() {
        return Err(PromptError::NoDemos);
    }
    for d in &demos.items {
        if !spec.has_letter(d.answer) {
            return Err(PromptError::DemoLabel {
                id: d.id.clone(),
                letter: d.answer,
                task: spec.name.clone(),
            });
        }
        if d.data.modeling() != modeling {
            return Err(PromptError::ModelingMismatch(format!(
                "demo {} is {} but the target is {modeling}",
                d.id,
                d.data.modeling()
            )));
        }
    }
    Ok(())
}

fn answer_bundle(
    parts: Vec<Part>,
    strategy: ReasoningStrategy,
    modeling: Modeling,
    spec: &TaskSpec,
    demo_ids: Vec<String>,
) -> PromptBundle {
    PromptBundle {
        parts,
        strategy,
        modeling,
        task: spec.name.clone(),
        stage: Stage::Answer,
        target_id: None,
        demo_ids,
    }
}

fn build_single(target: &Part, spec: &TaskSpec, cot: bool) -> Result<PromptBundle, PromptError> {
    check_classes(spec)?;
    let mut b = PartsBuilder::default();
    b.text("\n");
    b.data(target);
    b.text(&question_block(spec, cot));
    let strategy = if cot {
        ReasoningStrategy::Cot
    } else {
        ReasoningStrategy::Zst
    };
    Ok(answer_bundle(b.finish(), strategy, target.modeling(), spec, Vec::new()))
}

/// Zero-shot prompt around one serialized series or image.
pub fn build_zst(target: &Part, spec: &TaskSpec) -> Result<PromptBundle, PromptError> {
    build_single(target, spec, false)
}

/// Zero-shot prompt plus the step-by-step instruction.
pub fn build_cot(target: &Part, spec: &TaskSpec) -> Result<PromptBundle, PromptError> {
    build_single(target, spec, true)
}

fn push_demos(b: &mut PartsBuilder, demos: &Demos, spec: &TaskSpec) {
    b.text("\n");
    for d in &demos.items {
        b.data(&d.data);
        b.text(&demo_block(spec, d.answer));
    }
    b.text("\n");
}

fn icl_strategy(demos: &Demos) -> ReasoningStrategy {
    ReasoningStrategy::Icl {
        demos_per_class: demos.demos_per_class,
    }
}

/// Labeled demonstrations in order, then the chain-of-thought target block.
pub fn build_icl(demos: &Demos, target: &Part, spec: &TaskSpec) -> Result<PromptBundle, PromptError> {
    check_classes(spec)?;
    let modeling = target.modeling();
    check_demos(demos, spec, modeling)?;
    let mut b = PartsBuilder::default();
    push_demos(&mut b, demos, spec);
    b.data(target);
    b.text(&question_block(spec, true));
    let ids = demos.items.iter().map(|d| d.id.clone()).collect();
    Ok(answer_bundle(b.finish(), icl_strategy(demos), modeling, spec, ids))
}

/// Text-only prompt asking for feature keywords and a domain choice.
pub fn build_planning_prompt(spec: &TaskSpec) -> Result<PromptBundle, PromptError> {
    check_classes(spec)?;
    let names: Vec<&str> = spec.classes.iter().map(|c| c.name.as_str()).collect();
    let text = format!(
        "{} \nYou need to distinguish between {} types: {}. What features do you plan to use for making this determination? Just give the keywords.\n\nTo extract these features, what is better between time-domain and frequency-domain visualization?  Just give answer.",
        spec.task_description,
        count_word(names.len()),
        english_list(&names)
    );
    Ok(PromptBundle {
        parts: vec![Part::Text(text)],
        strategy: ReasoningStrategy::Zst,
        modeling: Modeling::Visual,
        task: spec.name.clone(),
        stage: Stage::Planning,
        target_id: None,
        demo_ids: Vec::new(),
    })
}

/// Image-first solving prompt carrying the plan's hints. `plan = None` drops
/// the hint line (planning ablated). Demos, when given, precede the target in
/// the same form as [`build_icl`]; hints appear only for the target.
pub fn build_solving_prompt(
    image: &RenderedImage,
    spec: &TaskSpec,
    plan: Option<&VisualizationPlan>,
    demos: Option<&Demos>,
) -> Result<PromptBundle, PromptError> {
    check_classes(spec)?;
    if let Some(p) = plan {
        if p.task != spec.name {
            return Err(PromptError::PlanMismatch {
                plan: p.task.clone(),
                task: spec.name.clone(),
            });
        }
    }
    let mut b = PartsBuilder::default();
    let mut ids = Vec::new();
    if let Some(d) = demos {
        check_demos(d, spec, Modeling::Visual)?;
        push_demos(&mut b, d, spec);
        ids = d.items.iter().map(|d| d.id.clone()).collect();
    }
    b.data(&Part::Image(image.clone()));
    let mut text = format!(
        "Given the visualization of time series data above, \nanswer the following question\nQuestion: {}\nChoices: {}\n",
        spec.task_description,
        class_choices(spec)
    );
    if let Some(p) = plan {
        let hints = p.hints.trim();
        let hints = if hints.to_ascii_lowercase().starts_with(&HINT_PREFIX.to_ascii_lowercase()) {
            hints[HINT_PREFIX.len()..].trim_start()
        } else {
            hints
        };
        if !hints.is_empty() {
            text.push_str(&format!("Hint: {HINT_PREFIX} {hints}\n"));
        }
    }
    text.push_str(COT_INSTRUCTION);
    text.push('\n');
    text.push_str(&format_block(""));
    b.text(&text);
    let strategy = demos.map_or(ReasoningStrategy::Cot, icl_strategy);
    Ok(answer_bundle(b.finish(), strategy, Modeling::Visual, spec, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::builtin_task_registry;
    use crate::viz::ImageDetail;

    fn img(tag: u8) -> RenderedImage {
        RenderedImage {
            png_bytes: vec![tag; 4],
            width_px: 640,
            height_px: 480,
            detail: ImageDetail::Low,
        }
    }

    #[test]
    fn choices_rendering() {
        let reg = builtin_task_registry();
        assert_eq!(
            class_choices(&reg["ECG"]),
            "(A) normal sinus rhythm; (B) fibrillation; (C) alternative rhythm; (D) too noisy to be classified"
        );
    }

    #[test]
    fn lists() {
        assert_eq!(english_list(&["a", "b"]), "a and b");
        assert_eq!(english_list(&["a", "b", "c"]), "a, b, and c");
        assert_eq!(count_word(4), "four");
    }

    #[test]
    fn zst_starts_with_data_line() {
        let reg = builtin_task_registry();
        let b = build_zst(&Part::Text("value: 1, 2".into()), &reg["CTU"]).unwrap();
        assert!(b.text().starts_with("\nvalue: 1, 2. \nGiven the time series data above, \n"));
        b.check_invariants().unwrap();
    }

    #[test]
    fn visual_zst_image_replaces_data_line() {
        let reg = builtin_task_registry();
        let b = build_zst(&Part::Image(img(1)), &reg["CTU"]).unwrap();
        assert_eq!(b.parts.len(), 2);
        assert!(matches!(b.parts[0], Part::Image(_)));
        assert!(b.text().starts_with("Given the time series data above, \n"));
        assert_eq!(b.modeling, Modeling::Visual);
        b.check_invariants().unwrap();
    }

    #[test]
    fn icl_rejects_empty_and_mixed() {
        let reg = builtin_task_registry();
        let spec = &reg["CTU"];
        let empty = Demos {
            items: vec![],
            demos_per_class: 1,
        };
        assert_eq!(
            build_icl(&empty, &Part::Text("v".into()), spec),
            Err(PromptError::NoDemos)
        );
        let mixed = Demos {
            items: vec![DemoInput {
                id: "d".into(),
                data: Part::Text("v".into()),
                answer: ClassLetter::from_char('A').unwrap(),
            }],
            demos_per_class: 1,
        };
        assert!(matches!(
            build_icl(&mixed, &Part::Image(img(0)), spec),
            Err(PromptError::ModelingMismatch(_))
        ));
    }

    #[test]
    fn solving_hint_not_duplicated() {
        let reg = builtin_task_registry();
        let plan = VisualizationPlan {
            task: "ECG".into(),
            domain_choice: crate::viz::Domain::Time,
            hints: "Consider characteristics including 1. RR intervals".into(),
        };
        let b = build_solving_prompt(&img(0), &reg["ECG"], Some(&plan), None).unwrap();
        assert!(b.text().contains("Hint: Consider characteristics including 1. RR intervals\n"));
        let other = VisualizationPlan {
            task: "HAR".into(),
            ..plan
        };
        assert!(build_solving_prompt(&img(0), &reg["ECG"], Some(&other), None).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let reg = builtin_task_registry();
        let a = build_zst(&Part::Image(img(1)), &reg["CTU"]).unwrap();
        let b = build_zst(&Part::Image(img(2)), &reg["CTU"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
