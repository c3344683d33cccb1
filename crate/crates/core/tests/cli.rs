use std::path::Path;
use std::process::{Command, Output};

use mcie::editor::{EditorConfig, EditorModel, Variant};
use serde_json::Value;

fn mcie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcie")).args(args).env_remove("MCIE_ALLOW_NETWORK").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mcie(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen-data", "--n", "10", "--records", "3", "--seed", "5", "--out", s(out)]);
    }
    for rel in ["manifest.jsonl", "images/00003_tgt.ppm", "multiturn/records.jsonl", "multiturn/manifest.jsonl"] {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let c = dir.path().join("c");
    ok(&["gen-data", "--n", "10", "--seed", "6", "--out", s(&c)]);
    assert_ne!(std::fs::read(a.join("manifest.jsonl")).unwrap(), std::fs::read(c.join("manifest.jsonl")).unwrap());
}

#[test]
fn errors_are_one_json_line_with_exit_code() {
    let out = mcie(&["train"]);
    assert_eq!(out.status.code(), Some(2));
    let out = mcie(&["evaluate", "/nonexistent/ckpt.json", "/nonexistent/bench.jsonl", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: Value = serde_json::from_str(stderr.trim().lines().last().unwrap()).unwrap();
    assert_eq!(line["code"], 3);
    assert!(line["reason"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn lambda_extremes_match_single_pathway_edits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--n", "2", "--out", s(&d.join("data"))]);
    let scene = d.join("data/images/00000_src.ppm");
    for variant in Variant::ALL {
        let model = EditorModel::new(EditorConfig { variant, ..EditorConfig::default() }, 3).unwrap();
        model.to_checkpoint().save(d.join(format!("{}.json", variant.name()))).unwrap();
    }
    let edit = |ckpt: &str, lambda: &str, out: &str| {
        ok(&[
            "edit",
            s(&d.join(ckpt)),
            s(&scene),
            "add a red square at the top left",
            s(&d.join(out)),
            "--lambda",
            lambda,
            "--steps",
            "5",
            "--seed",
            "9",
        ]);
        std::fs::read(d.join(out)).unwrap()
    };
    assert_eq!(edit("full.json", "0", "a.ppm"), edit("no-saca.json", "0", "b.ppm"));
    assert_eq!(edit("full.json", "1", "c.ppm"), edit("no-bcca.json", "1", "d.ppm"));
    assert_ne!(edit("full.json", "0.5", "e.ppm"), edit("full.json", "0", "f.ppm"));
}

#[test]
fn train_evaluate_report_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--n", "8", "--max-subs", "1", "--out", s(&d.join("simple"))]);
    ok(&["gen-data", "--n", "8", "--min-subs", "2", "--max-subs", "3", "--out", s(&d.join("complex"))]);
    ok(&["gen-data", "--n", "4", "--seed", "11", "--out", s(&d.join("bench"))]);
    let ckpt = d.join("model.json");
    ok(&[
        "train",
        s(&d.join("simple/manifest.jsonl")),
        s(&d.join("complex/manifest.jsonl")),
        s(&ckpt),
        "--steps1",
        "3",
        "--steps2",
        "3",
    ]);
    assert!(d.join("model.phase1.json").exists());

    let bench = d.join("bench/manifest.jsonl");
    let mut reports = Vec::new();
    for (c, method) in [("model.json", "phase2"), ("model.phase1.json", "phase1")] {
        let out = d.join(format!("{method}.report.json"));
        ok(&["evaluate", s(&d.join(c)), s(&bench), s(&out), "--method", method, "--steps", "3"]);
        let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["method"], method);
        assert_eq!(report["n"], 4);
        for key in ["clip_i", "dino_i", "l1", "l2", "ic", "bc"] {
            assert!(report["metrics"][key].is_number(), "{key}");
        }
        reports.push(out);
    }
    let table = ok(&["report", s(&reports[0]), s(&reports[1])]);
    assert!(table.contains("phase1") && table.contains("phase2"));
}
