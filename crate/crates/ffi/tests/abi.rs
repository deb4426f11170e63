use std::ffi::{c_char, CStr, CString};
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::ptr;

use timerbed::ingest::{save_dataset, split_by_id_hash, Dataset};
use timerbed::task::{builtin_task_registry, ClassLetter, Split, TimeSeriesSample};
use timerbed_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { tb_string_free(p) };
    s
}

fn last_error() -> String {
    let p = tb_last_error();
    assert!(!p.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_ctu(dir: &Path) -> Dataset {
    let spec = builtin_task_registry()["CTU"].clone();
    let make = |id: &str, k: usize, split| TimeSeriesSample {
        id: id.into(),
        label: ClassLetter::from_index(k).unwrap(),
        values: vec![(0..spec.series_length)
            .map(|t| ((t * (k + 1)) as f64 * 0.1).sin())
            .collect()],
        split,
    };
    let ds = Dataset {
        train: vec![make("a0", 0, Split::Train), make("b0", 1, Split::Train)],
        test: vec![make("a1", 0, Split::Test), make("b1", 1, Split::Test)],
        spec,
    };
    save_dataset(&ds, dir).unwrap();
    ds
}

#[test]
fn dataset_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    write_ctu(dir.path());
    let path = c(dir.path().to_str().unwrap());
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { tb_dataset_load(path.as_ptr(), &mut ds) }, TbStatus::Ok);
    assert!(tb_last_error().is_null());

    let mut info = TbDatasetInfo::default();
    assert_eq!(unsafe { tb_dataset_info(ds, &mut info) }, TbStatus::Ok);
    assert_eq!(
        (info.num_classes, info.num_channels, info.series_length, info.train_count, info.test_count),
        (2, 1, 720, 2, 2)
    );

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tb_dataset_summary(ds, &mut s) }, TbStatus::Ok);
    assert_eq!(take_string(s), "CTU: 2 classes, 1 channels, 720 points; train 2, test 2");

    assert_eq!(unsafe { tb_dataset_digest(path.as_ptr(), &mut s) }, TbStatus::Ok);
    assert_eq!(take_string(s), timerbed::ingest::dataset_digest(dir.path()).unwrap());

    assert_eq!(unsafe { tb_dataset_serialize_numeric(ds, c("a1").as_ptr(), 4, &mut s) }, TbStatus::Ok);
    let text = take_string(s);
    assert!(text.starts_with("power: 0, 0.09983, "), "{text}");

    let mut buf = TbBuffer { data: ptr::null_mut(), len: 0 };
    let mut tokens = 0;
    assert_eq!(
        unsafe { tb_dataset_render_png(ds, c("b0").as_ptr(), ptr::null(), &mut buf, &mut tokens) },
        TbStatus::Ok
    );
    let png = unsafe { std::slice::from_raw_parts(buf.data, buf.len) };
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    assert_eq!(tokens, 85);
    unsafe { tb_buffer_free(buf) };
    let mut buf = TbBuffer { data: ptr::null_mut(), len: 0 };

    assert_eq!(
        unsafe { tb_dataset_render_png(ds, c("zz").as_ptr(), ptr::null(), &mut buf, ptr::null_mut()) },
        TbStatus::NotFound
    );
    assert!(last_error().contains("zz"));
    assert_eq!(
        unsafe { tb_dataset_render_png(ds, c("a0").as_ptr(), c("sideways").as_ptr(), &mut buf, ptr::null_mut()) },
        TbStatus::InvalidArgument
    );
    unsafe { tb_dataset_free(ds) };
    unsafe { tb_dataset_free(ptr::null_mut()) };
}

#[test]
fn load_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = ptr::null_mut();
    let missing = c(dir.path().join("nope").to_str().unwrap());
    assert_eq!(unsafe { tb_dataset_load(missing.as_ptr(), &mut ds) }, TbStatus::NotFound);
    assert!(ds.is_null());
    assert!(last_error().contains("missing file"));

    write_ctu(dir.path());
    let train = dir.path().join("train.jsonl");
    let body = std::fs::read_to_string(&train).unwrap().replace("\"label\":\"B\"", "\"label\":\"Q\"");
    std::fs::write(&train, body).unwrap();
    let path = c(dir.path().to_str().unwrap());
    assert_eq!(unsafe { tb_dataset_load(path.as_ptr(), &mut ds) }, TbStatus::InvalidData);

    assert_eq!(unsafe { tb_dataset_load(ptr::null(), &mut ds) }, TbStatus::NullArgument);
    assert_eq!(unsafe { tb_dataset_load(path.as_ptr(), ptr::null_mut()) }, TbStatus::NullArgument);
    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { tb_dataset_load(bad_utf8.as_ptr().cast(), &mut ds) }, TbStatus::InvalidUtf8);
    let mut info = TbDatasetInfo::default();
    assert_eq!(unsafe { tb_dataset_info(ptr::null(), &mut info) }, TbStatus::NullArgument);
}

#[test]
fn split_matches_the_library() {
    let ids: Vec<String> = (0..37).map(|i| format!("sample-{i}")).collect();
    let cids: Vec<CString> = ids.iter().map(|s| c(s)).collect();
    let ptrs: Vec<*const c_char> = cids.iter().map(|s| s.as_ptr()).collect();
    let mut flags = vec![9u8; ids.len()];
    assert_eq!(unsafe { tb_split_ids(ptrs.as_ptr(), ids.len(), 0.8, flags.as_mut_ptr()) }, TbStatus::Ok);

    let samples = ids
        .iter()
        .map(|id| TimeSeriesSample {
            id: id.clone(),
            label: ClassLetter::from_index(0).unwrap(),
            values: vec![],
            split: Split::Train,
        })
        .collect();
    let (train, _) = split_by_id_hash(samples, 0.8);
    let want: Vec<u8> = ids.iter().map(|id| u8::from(train.iter().any(|s| &s.id == id))).collect();
    assert_eq!(flags, want);
    assert_eq!(flags.iter().filter(|&&f| f == 1).count(), 30);

    assert_eq!(unsafe { tb_split_ids(ptrs.as_ptr(), ids.len(), 1.5, flags.as_mut_ptr()) }, TbStatus::InvalidArgument);
    assert_eq!(unsafe { tb_split_ids(ptr::null(), 0, 0.8, ptr::null_mut()) }, TbStatus::Ok);
}

#[test]
fn registry_json_has_builtin_shapes() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tb_task_registry_json(&mut s) }, TbStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
    for (task, d, l, k) in [
        ("RCW", 1, 4000, 2),
        ("TEE", 1, 319, 7),
        ("ECG", 1, 1500, 4),
        ("EMG", 1, 1500, 3),
        ("CTU", 1, 720, 2),
        ("HAR", 3, 206, 6),
    ] {
        let t = &v[task];
        assert_eq!(t["num_variables"], d, "{task}");
        assert_eq!(t["series_length"], l, "{task}");
        assert_eq!(t["classes"].as_array().unwrap().len(), k, "{task}");
    }
}

#[test]
fn answer_parsing() {
    let mut letter: c_char = 0;
    let ctu = c("CTU");
    let r = unsafe { tb_parse_answer(ctu.as_ptr(), c("Answer Choice: (B) laptop").as_ptr(), &mut letter) };
    assert_eq!((r, letter as u8), (TbStatus::Ok, b'B'));
    let r = unsafe { tb_parse_answer(ctu.as_ptr(), c("no idea").as_ptr(), &mut letter) };
    assert_eq!(r, TbStatus::NoAnswer);
    let r = unsafe { tb_parse_answer(ctu.as_ptr(), c("Answer Choice: (A) or (B)").as_ptr(), &mut letter) };
    assert_eq!(r, TbStatus::AmbiguousAnswer);
    let r = unsafe { tb_parse_answer(c("XYZ").as_ptr(), c("(A)").as_ptr(), &mut letter) };
    assert_eq!(r, TbStatus::NotFound);
}

/// Direct O(n^2) sum, as the reference for the fast path.
fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, v)| {
                let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

#[test]
fn dft_matches_direct_sum() {
    for n in [1usize, 5, 64, 97] {
        let x: Vec<f64> = (0..n).map(|t| ((t * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(unsafe { tb_dft(x.as_ptr(), n, re.as_mut_ptr(), im.as_mut_ptr()) }, TbStatus::Ok);
        for (k, (r, i)) in naive_dft(&x).into_iter().enumerate() {
            assert!((re[k] - r).abs() < 1e-9 && (im[k] - i).abs() < 1e-9, "n={n} k={k}");
        }
    }
    assert_eq!(unsafe { tb_dft(ptr::null(), 0, ptr::null_mut(), ptr::null_mut()) }, TbStatus::InvalidArgument);
    assert_eq!(unsafe { tb_dft(ptr::null(), 3, ptr::null_mut(), ptr::null_mut()) }, TbStatus::NullArgument);
}

#[test]
fn metrics_and_tokens() {
    assert!((tb_cost(60_000, 0, 2.5, 10.0) - 0.15).abs() < 1e-12);
    assert!((tb_cost(1_000_000, 1_000_000, 2.5, 10.0) - 12.5).abs() < 1e-12);
    assert_eq!(tb_image_tokens(640, 480, false), 85);
    assert_eq!(tb_image_tokens(640, 480, true), 262);

    let mut v = 0.0;
    assert_eq!(unsafe { tb_improvement(91.03, 50.0, &mut v) }, TbStatus::Ok);
    assert!((v - 82.06).abs() < 1e-9);
    assert_eq!(unsafe { tb_improvement(1.0, 0.0, &mut v) }, TbStatus::InvalidArgument);
    assert_eq!(unsafe { tb_normalize(50.0, c("ECG").as_ptr(), &mut v) }, TbStatus::Ok);
    assert!((v - 2.0).abs() < 1e-9);

    let (mut wins, mut total) = (0, 0);
    assert_eq!(unsafe { tb_win_count(63.64, c("CTU").as_ptr(), &mut wins, &mut total) }, TbStatus::Ok);
    assert_eq!((wins, total), (4, 8));
    assert_eq!(
        unsafe { tb_win_count(63.64, c("NOPE").as_ptr(), &mut wins, &mut total) },
        TbStatus::NotFound
    );
}

#[test]
fn prompts_through_the_abi() {
    let mut s = ptr::null_mut();
    let ecg = c("ECG");
    assert_eq!(unsafe { tb_build_prompt(ecg.as_ptr(), c("cot").as_ptr(), c("ecg: 1, 2").as_ptr(), &mut s) }, TbStatus::Ok);
    let cot = take_string(s);
    assert!(cot.starts_with("\necg: 1, 2. \n"), "{cot:?}");
    assert!(cot.contains("Please solve this problem step by step."));
    assert!(cot.contains("---BEGIN FORMAT TEMPLATE---"));

    assert_eq!(unsafe { tb_build_prompt(ecg.as_ptr(), c("plan").as_ptr(), ptr::null(), &mut s) }, TbStatus::Ok);
    assert!(take_string(s).contains("time-domain and frequency-domain"));

    let r = unsafe { tb_build_prompt(ecg.as_ptr(), c("icl:1").as_ptr(), c("x").as_ptr(), &mut s) };
    assert_eq!(r, TbStatus::InvalidArgument);
    assert!(last_error().contains("icl:1"));
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(tb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// The generated header must compile as both C and C++.
#[test]
fn header_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/timerbed.h");
    assert!(header.is_file());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"timerbed.h\"\nint main(void) { TbDatasetInfo i; (void)i; return tb_image_tokens(640, 480, false) == 85 ? 0 : 1; }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(header.parent().unwrap())
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(_) => eprintln!("{compiler} not available; skipping"),
        }
    }
}

/// Links a C program against the static library and runs it.
#[test]
fn c_program_links_and_runs() {
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libtimerbed_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "timerbed.h"
int main(void) {
    char letter = 0;
    if (tb_parse_answer("HAR", "Answer Choice: (E)", &letter) != TB_STATUS_OK || letter != 'E') return 1;
    TbDataset *ds = NULL;
    if (tb_dataset_load("/definitely/not/here", &ds) != TB_STATUS_NOT_FOUND || ds != NULL) return 2;
    if (tb_last_error() == NULL) return 3;
    double x[4] = {1, 0, -1, 0}, re[4], im[4];
    if (tb_dft(x, 4, re, im) != TB_STATUS_OK || re[1] != 2.0) return 4;
    printf("%u\n", tb_image_tokens(640, 480, true));
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let built = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status();
    match built {
        Ok(s) => assert!(s.success(), "linking against the static library failed"),
        Err(_) => {
            eprintln!("cc not available; skipping");
            return;
        }
    }
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "262");
}
