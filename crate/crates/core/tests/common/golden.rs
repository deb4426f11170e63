use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use timerbed::prompt::{
    build_cot, build_icl, build_planning_prompt, build_solving_prompt, build_zst, serialize_numeric, DemoInput, Demos,
    Part, PromptBundle, VisualizationPlan,
};
use timerbed::task::{builtin_task_registry, ClassLetter, Split, TaskSpec, TimeSeriesSample};
use timerbed::viz::{Domain, ImageDetail, RenderedImage};

pub const BLESS_ENV: &str = "TIMERBED_BLESS";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts")
}

/// Short stand-in series: the builders never look at the length.
pub fn short_sample(spec: &TaskSpec, id: &str, letter: ClassLetter) -> TimeSeriesSample {
    let values = (0..spec.num_variables)
        .map(|c| (0..6).map(|t| 0.1234 * (t as f64 + 1.0) - c as f64 + letter.index() as f64 * 0.5).collect())
        .collect();
    TimeSeriesSample {
        id: id.into(),
        label: letter,
        values,
        split: Split::Train,
    }
}

pub fn fake_image(tag: &str) -> RenderedImage {
    RenderedImage {
        png_bytes: tag.as_bytes().to_vec(),
        width_px: 640,
        height_px: 480,
        detail: ImageDetail::Low,
    }
}

/// Text parts verbatim; images as a one-line placeholder.
pub fn dump(bundle: &PromptBundle) -> String {
    let mut out = String::new();
    for part in &bundle.parts {
        match part {
            Part::Text(t) => out.push_str(t),
            Part::Image(img) => {
                let digest = hex::encode(Sha256::digest(&img.png_bytes));
                writeln!(
                    out,
                    "[image {}x{} detail={} sha256={}]",
                    img.width_px,
                    img.height_px,
                    img.detail,
                    &digest[..12]
                )
                .unwrap();
            }
        }
    }
    out
}

pub fn numeric_demos(spec: &TaskSpec) -> Demos {
    Demos {
        items: spec
            .letters()
            .map(|l| {
                let s = short_sample(spec, &format!("demo-{}", l.as_char()), l);
                DemoInput {
                    id: s.id.clone(),
                    data: Part::Text(serialize_numeric(&s, spec, 4).unwrap()),
                    answer: l,
                }
            })
            .collect(),
        demos_per_class: 1,
    }
}

pub fn visual_demos(spec: &TaskSpec) -> Demos {
    Demos {
        items: spec
            .letters()
            .map(|l| DemoInput {
                id: format!("demo-{}", l.as_char()),
                data: Part::Image(fake_image(&format!("demo-{}", l.as_char()))),
                answer: l,
            })
            .collect(),
        demos_per_class: 1,
    }
}

pub fn plan_for(spec: &TaskSpec) -> VisualizationPlan {
    VisualizationPlan {
        task: spec.name.clone(),
        domain_choice: Domain::Time,
        hints: "1. peak amplitude; 2. periodicity; 3. trend".into(),
    }
}

pub fn golden_bundles(spec: &TaskSpec) -> Vec<(&'static str, PromptBundle)> {
    let target = short_sample(spec, "target", ClassLetter::from_index(0).unwrap());
    let numeric = Part::Text(serialize_numeric(&target, spec, 4).unwrap());
    let image = fake_image("target");
    let plan = plan_for(spec);
    vec![
        ("zst", build_zst(&numeric, spec).unwrap()),
        ("cot", build_cot(&numeric, spec).unwrap()),
        ("icl", build_icl(&numeric_demos(spec), &numeric, spec).unwrap()),
        ("planning", build_planning_prompt(spec).unwrap()),
        ("solving", build_solving_prompt(&image, spec, Some(&plan), None).unwrap()),
        ("solving_icl", build_solving_prompt(&image, spec, Some(&plan), Some(&visual_demos(spec))).unwrap()),
    ]
}

/// Rebuilds every fixture and returns the paths that differ. With
/// `TIMERBED_BLESS` set the fixtures are rewritten instead.
pub fn check_fixtures() -> Vec<String> {
    let bless = std::env::var_os(BLESS_ENV).is_some();
    let dir = fixtures_dir();
    if bless {
        fs::create_dir_all(&dir).unwrap();
    }
    let mut mismatches = Vec::new();
    for (name, spec) in builtin_task_registry() {
        for (builder, bundle) in golden_bundles(&spec) {
            bundle.check_invariants().unwrap();
            let path = dir.join(format!("{name}__{builder}.txt"));
            let got = dump(&bundle);
            if bless {
                fs::write(&path, &got).unwrap();
                continue;
            }
            match fs::read_to_string(&path) {
                Ok(want) if want == got => {}
                _ => mismatches.push(path.display().to_string()),
            }
        }
    }
    mismatches
}
