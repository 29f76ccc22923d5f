mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{generation_fixture, grounding_fixture, page, write_json};
use serde_json::json;

const ARTIFACTS: [&str; 5] = ["layout.json", "tree.json", "index.html", "report.json", "metrics.json"];

fn screencoder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_screencoder"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mock_run_writes_five_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("page.png");
    page().save(&image).unwrap();
    let g = write_json(dir.path(), "g.json", &grounding_fixture(None));
    let out = dir.path().join("out");
    let o = screencoder(&["run", s(&image), "--backend", "mock", "--grounding-fixture", s(&g), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ARTIFACTS {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["composite"].as_f64().unwrap() > 0.9);

    let again = dir.path().join("again");
    let o = screencoder(&["run", s(&image), "--grounding-fixture", s(&g), "--out", s(&again)]);
    assert_eq!(o.status.code(), Some(0));
    for f in ARTIFACTS {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unreachable_backend_without_fallback_fails() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("page.png");
    page().save(&image).unwrap();
    let g = write_json(dir.path(), "g.json", &grounding_fixture(Some("header")));
    let out = dir.path().join("out");
    let o = screencoder(&["run", s(&image), "--grounding-fixture", s(&g), "--no-fallback", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("backend unreachable"), "{stderr}");
    assert!(!out.join("index.html").exists());
}

#[test]
fn substituted_generation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("page.png");
    page().save(&image).unwrap();
    let g = write_json(dir.path(), "g.json", &grounding_fixture(None));
    let c = write_json(
        dir.path(),
        "c.json",
        &generation_fixture(json!([{"target": "sidebar", "unreachable": true}])),
    );
    let out = dir.path().join("out");
    let args = ["run", s(&image), "--grounding-fixture", s(&g), "--generation-fixture", s(&c), "--out", s(&out)];
    let o = screencoder(&args);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "degraded");
    assert_eq!(report["generation"]["nodes"]["sidebar"]["status"], "substituted");

    let strict = [&args[..], &["--no-fallback"]].concat();
    assert_eq!(screencoder(&strict).status.code(), Some(1));
}

#[test]
fn prompted_main_content_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("page.png");
    page().save(&image).unwrap();
    let g = write_json(dir.path(), "g.json", &grounding_fixture(None));
    let out = dir.path().join("out");
    let o = screencoder(&["run", s(&image), "--grounding-fixture", s(&g), "--main-content", "prompted", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let layout: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("layout.json")).unwrap()).unwrap();
    // the fixture has no main_content answer, so the inferred box stands in
    assert_eq!(layout["entries"]["main_content"]["provenance"], "inferred");

    assert_ne!(screencoder(&["run", s(&image), "--main-content", "sideways"]).status.code(), Some(0));
    let missing = screencoder(&["run", s(&dir.path().join("nope.png")), "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn batch_filter_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    page().save(corpus.join("a.png")).unwrap();
    page().save(corpus.join("b.png")).unwrap();
    let g = write_json(dir.path(), "g.json", &grounding_fixture(None));
    let out = dir.path().join("data");
    let o = screencoder(&["batch", s(&corpus), "--out", s(&out), "--workers", "2", "--grounding-fixture", s(&g)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let kept = dir.path().join("kept.jsonl");
    let o = screencoder(&["filter", s(&out.join("dataset.jsonl")), s(&kept), "--floor", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((report["total"].as_u64(), report["kept"].as_u64()), (Some(2), Some(2)));
    assert_eq!(screencoder(&["filter", s(&kept), s(&kept), "--floor", "2"]).status.code(), Some(1));

    let blocks = write_json(
        dir.path(),
        "ref.blocks.json",
        &json!({"version": 1, "page_size": {"width": 400, "height": 300}, "blocks": [
            {"box": [0, 0, 400, 40], "text": "header", "color": [156, 163, 175]}
        ]}),
    );
    let o = screencoder(&["eval", "--reference", s(&blocks), "--candidate", s(&blocks)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((m["composite"].as_f64().unwrap() - 1.0).abs() < 1e-9, "{m}");
}
