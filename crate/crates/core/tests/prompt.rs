mod common;

use std::fs;

use common::golden::*;
use proptest::prelude::*;
use timerbed::prompt::{
    build_cot, build_icl, build_planning_prompt, build_solving_prompt, build_zst, Demos, Part, PromptError, Stage,
    VisualizationPlan, BEGIN_FORMAT, COT_INSTRUCTION,
};
use timerbed::task::{builtin_task_registry, ClassLetter, Modeling, ReasoningStrategy};
use timerbed::viz::Domain;

#[test]
fn golden_prompts() {
    let mismatches = check_fixtures();
    assert!(mismatches.is_empty(), "differs from fixture (set {BLESS_ENV}=1 to regenerate): {mismatches:?}");
}

#[test]
fn fixtures_carry_the_template_strings() {
    let dir = fixtures_dir();
    for name in builtin_task_registry().keys() {
        let read = |b: &str| fs::read_to_string(dir.join(format!("{name}__{b}.txt"))).unwrap();
        for b in ["zst", "cot", "icl", "solving", "solving_icl"] {
            assert!(read(b).contains(BEGIN_FORMAT), "{name} {b}");
        }
        for b in ["cot", "icl", "solving", "solving_icl"] {
            assert!(read(b).contains(COT_INSTRUCTION), "{name} {b}");
        }
        assert!(!read("zst").contains(COT_INSTRUCTION));
        assert!(read("solving").contains("Hint: Consider characteristics including 1. peak amplitude"));
        assert!(read("planning").contains("what is better between time-domain and frequency-domain visualization?"));
    }
}

#[test]
fn numeric_zst_layout() {
    let spec = &builtin_task_registry()["CTU"];
    let b = build_zst(&Part::Text("power: 1, 2".into()), spec).unwrap();
    let want = "\npower: 1, 2. \nGiven the time series data above, \nanswer the following question\nusing the specified format.\n";
    assert!(b.text().starts_with(want), "{:?}", b.text());
    assert!(b.text().contains("    Question: Play as a computer energy consumption analysis expert"));
    assert!(b.text().contains("    Choices: (A) desktop"));
    assert!(b.text().ends_with(
        "    Do not deviate from the above format. \n    Repeat the format template for the answer.\n"
    ));
    assert_eq!((b.strategy, b.modeling, b.stage), (ReasoningStrategy::Zst, Modeling::Numeric, Stage::Answer));
}

#[test]
fn planning_prompt_lists_classes() {
    let reg = builtin_task_registry();
    let har = build_planning_prompt(&reg["HAR"]).unwrap().text();
    assert!(har.contains("You need to distinguish between six types: "), "{har}");
    let ctu = build_planning_prompt(&reg["CTU"]).unwrap().text();
    assert!(ctu.contains("between two types: desktop and laptop."), "{ctu}");
}

#[test]
fn solving_prompt_variants() {
    let spec = &builtin_task_registry()["ECG"];
    let img = fake_image("x");
    let no_plan = build_solving_prompt(&img, spec, None, None).unwrap();
    assert!(!no_plan.text().contains("Hint:"));
    assert!(matches!(no_plan.parts[0], Part::Image(_)));

    let prefixed = VisualizationPlan {
        hints: "Consider characteristics including rhythm".into(),
        ..plan_for(spec)
    };
    let b = build_solving_prompt(&img, spec, Some(&prefixed), None).unwrap();
    assert_eq!(b.text().matches("Consider characteristics including").count(), 1);

    let wrong = VisualizationPlan {
        task: "HAR".into(),
        ..plan_for(spec)
    };
    assert!(matches!(
        build_solving_prompt(&img, spec, Some(&wrong), None),
        Err(PromptError::PlanMismatch { .. })
    ));

    let b = build_solving_prompt(&img, spec, Some(&plan_for(spec)), Some(&visual_demos(spec))).unwrap();
    assert_eq!(b.image_count(), 5);
    assert_eq!(b.text().matches("Hint:").count(), 1);
    assert_eq!(b.strategy, ReasoningStrategy::Icl { demos_per_class: 1 });
    let order: Vec<&[u8]> = b.images().map(|i| i.png_bytes.as_slice()).collect();
    assert_eq!(order, [&b"demo-A"[..], b"demo-B", b"demo-C", b"demo-D", b"x"]);
}

#[test]
fn icl_rejects_bad_demos() {
    let spec = &builtin_task_registry()["EMG"];
    let target = Part::Text("x".into());
    let empty = Demos {
        items: vec![],
        demos_per_class: 1,
    };
    assert!(matches!(build_icl(&empty, &target, spec), Err(PromptError::NoDemos)));
    assert!(matches!(
        build_icl(&visual_demos(spec), &target, spec),
        Err(PromptError::ModelingMismatch(_))
    ));
    let mut bad = numeric_demos(spec);
    bad.items[0].answer = ClassLetter::from_char('F').unwrap();
    assert!(matches!(build_icl(&bad, &target, spec), Err(PromptError::DemoLabel { .. })));
}

proptest! {
    #[test]
    fn bundles_keep_invariants(
        names in prop::collection::vec("[a-z]{1,10}( [a-z]{1,8})?", 2..8),
        data in "[ -~]{0,80}",
        hints in "[ -~]{0,60}",
    ) {
        let mut spec = builtin_task_registry()["HAR"].clone();
        spec.classes = names
            .iter()
            .enumerate()
            .map(|(i, n)| timerbed::task::ClassInfo {
                letter: ClassLetter::from_index(i).unwrap(),
                name: n.clone(),
                description: String::new(),
            })
            .collect();
        let part = Part::Text(data);
        for b in [build_zst(&part, &spec).unwrap(), build_cot(&part, &spec).unwrap()] {
            b.check_invariants().unwrap();
            prop_assert_eq!(b.text().matches(BEGIN_FORMAT).count(), 1);
        }
        let plan = VisualizationPlan { task: spec.name.clone(), domain_choice: Domain::Time, hints };
        let b = build_solving_prompt(&fake_image("t"), &spec, Some(&plan), None).unwrap();
        b.check_invariants().unwrap();
        build_planning_prompt(&spec).unwrap().check_invariants().unwrap();
    }
}
