mod common;

use std::path::{Path, PathBuf};

use pagestream::harness::cli::run_cli;
use pagestream::harness::document::parse_json;
use pagestream::harness::memory::{predict_vram, SweepSpecFile};

use common::corpus_dir;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("pagestream").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn corpus(name: &str) -> String {
    corpus_dir().join(name).display().to_string()
}

fn spec_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("specs/memory_sweep.json")
}

#[test]
fn compress_reports_constant_budget() {
    let (code, out, _) = run(&["compress", &corpus("invoice_3p.json")]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("budget: constant"), "{out}");
    assert!(out.contains("budget check: ok"), "{out}");
}

#[test]
fn stream_qa_answers_from_second_segment() {
    const Q: &str = "Who chaired the meeting?";
    let doc = corpus("minutes_12p.json");
    for extra in [&[][..], &["--parallel"][..]] {
        let mut args = vec!["stream-qa", doc.as_str(), "--query", Q];
        args.extend_from_slice(extra);
        let (code, out, err) = run(&args);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("segment 0 pages 1-10\tu=0.0000\tabstained=true"), "{out}");
        assert!(out.contains("final: answer=\"Elena Vogt\""), "{out}");
        assert!(out.contains("segment=1 all_abstained=false"), "{out}");
        assert!(out.contains("resident after run 0"), "{out}");
    }
}

#[test]
fn mem_sweep_csv_matches_model_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file().display().to_string();
    let mut csvs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let (code, _, err) = run(&["mem-sweep", "--spec", &spec, "--pages", "120,2,5,10,15,20", "--out", path.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        csvs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);

    let file: SweepSpecFile = parse_json(&std::fs::read_to_string(spec_file()).unwrap(), "spec").unwrap();
    let specs = file.resolve().unwrap();
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("label,pages,k_tokens,predicted_gb"));
    let mut rows = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let spec = specs.iter().find(|s| s.label == f[0]).unwrap();
        let pages: usize = f[1].parse().unwrap();
        let k = spec.k_tokens(pages);
        assert_eq!(f[2], format!("{k:.3}"));
        assert_eq!(f[3], format!("{:.1}", predict_vram(&spec.params, k)));
        rows += 1;
    }
    assert_eq!(rows, 12);
    assert!(text.contains("streaming-2b,120,5.760,14.2\n"), "{text}");
}

#[test]
fn eval_is_deterministic_across_modes() {
    let dir = corpus_dir().display().to_string();
    let (code, first, err) = run(&["eval", &dir]);
    assert_eq!(code, 0, "{err}");
    let (_, again, _) = run(&["eval", &dir]);
    let (_, parallel, _) = run(&["eval", &dir, "--parallel"]);
    assert_eq!(first, again);
    assert_eq!(first, parallel);
    assert!(first.contains("overall: mean ANLS"), "{first}");
}

#[test]
fn assign_ocr_lists_crops() {
    let (code, out, _) = run(&["assign-ocr", &corpus("invoice_3p.json"), "--page", "2"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("page 2: grid "), "{out}");
    assert!(out.contains("Nordwind"), "{out}");
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_bbox = write(
        dir.path(),
        "bad.json",
        r#"{"doc_id": "d", "pages": [{"page_id": 1, "width_px": 10, "height_px": 10,
            "ocr": [{"text": "oops", "bbox": [0.5, 0.1, 0.4, 0.2], "conf": 0.9}]}]}"#,
    );
    let (code, _, err) = run(&["compress", &bad_bbox]);
    assert_eq!(code, 1);
    assert!(err.contains("pages[0].ocr[0].bbox") && err.contains("oops"), "{err}");

    let unknown = write(dir.path(), "unknown.json", r#"{"doc_id": "d", "pages": [], "extra": 1}"#);
    assert_eq!(run(&["compress", &unknown]).0, 1);

    let (code, _, _) = run(&["compress", "/definitely/missing.json"]);
    assert_eq!(code, 1);

    let doc = corpus("invoice_3p.json");
    assert_eq!(run(&["assign-ocr", &doc, "--page", "99"]).0, 1);
    assert_eq!(run(&["stream-qa", &doc, "--query", "q", "--segment-len", "0"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);

    let cfg = write(dir.path(), "cfg.json", r#"{"grid": {"min_crops": 9, "max_crops": 3}}"#);
    assert_eq!(run(&["compress", &doc, "--config", &cfg]).0, 1);

    let spec = write(dir.path(), "spec.json", r#"{"models": [{"label": "x", "tokens_per_page": 10,
        "fit": {"p_b": 2.0, "b": 1.0, "points": [[2, 9.0], [10, 1.0]]}}]}"#);
    let csv = dir.path().join("o.csv");
    assert_eq!(run(&["mem-sweep", "--spec", &spec, "--pages", "2", "--out", csv.to_str().unwrap()]).0, 1);
    assert!(!csv.exists());
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("stream-qa"));
}
