use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sigclass::classifier::ClassModel;
use sigclass::scoring::ScaleFactors;

const SMALL: &str = r#"{
  "dataset": {"kind": "shapes", "size": 8},
  "image_size": [8, 8],
  "channels": 1,
  "convention": {"layout": "rows_as_steps", "basepoint": true},
  "budgets": {"train": 3, "val": 4, "test": 5},
  "embed": {"samples": 20, "perplexity": 4.0, "iterations": 300},
  "spectra": {"window": 9, "polyorder": 2}
}"#;

fn sigclass(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigclass"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sigclass(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("single-line JSON error");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn with_config(body: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), body).unwrap();
    dir
}

#[test]
fn gen_shapes_writes_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "a", "--seed", "3", "gen-shapes", "--per-class", "10"]);
    ok(dir.path(), &["--out", "b", "--seed", "3", "gen-shapes", "--per-class", "10"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 40);
    for f in files {
        let rel = f["path"].as_str().unwrap();
        let a = fs::read(dir.path().join("a").join(rel)).unwrap();
        assert!(a.starts_with(b"P6"));
        assert_eq!(a, fs::read(dir.path().join("b").join(rel)).unwrap());
    }
    let out = sigclass(dir.path(), &["--out", "c", "gen-shapes", "--size", "7"]);
    assert_eq!(error_kind(&out), "contract");
}

#[test]
fn generated_directory_loads_as_image_dir() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "data", "gen-shapes", "--per-class", "12", "--size", "8"]);
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"dataset": {"kind": "image_dir", "root": "data"}, "image_size": [8, 8],
            "convention": {"layout": "rows_as_steps", "basepoint": true},
            "budgets": {"train": 3, "val": 4, "test": 5}, "protocols": ["plain"]}"#,
    )
    .unwrap();
    let stdout = ok(dir.path(), &["--config", "cfg.json", "--out", "run", "fit"]);
    assert!(stdout.contains("fitted 4 classes"));
    ok(dir.path(), &["--config", "cfg.json", "--out", "run", "eval"]);
    assert!(dir.path().join("run/report_plain.json").exists());
}

#[test]
fn fit_and_eval_are_byte_identical_across_runs() {
    let dir = with_config(SMALL);
    for out in ["r1", "r2"] {
        ok(dir.path(), &["--config", "cfg.json", "--out", out, "fit"]);
        ok(dir.path(), &["--config", "cfg.json", "--out", out, "eval", "--protocol", "fixed,oracle"]);
    }
    for f in ["model.json", "report_fixed.json", "report_oracle.json", "confusion_fixed.csv", "confusion_oracle.csv"] {
        let a = fs::read(dir.path().join("r1").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("r2").join(f)).unwrap(), "{f}");
    }
    let model: ClassModel =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r1/model.json")).unwrap()).unwrap();
    assert_eq!(model.classes.len(), 4);
    assert!(model.classes.iter().all(|c| c.ova_threshold.is_some()));
    // A different seed changes the model.
    ok(dir.path(), &["--config", "cfg.json", "--out", "r3", "--seed", "1", "fit"]);
    assert_ne!(
        fs::read(dir.path().join("r1/model.json")).unwrap(),
        fs::read(dir.path().join("r3/model.json")).unwrap()
    );
}

#[test]
fn calibration_none_gives_unit_lambda() {
    let cfg = SMALL.replace("\"spectra\"", "\"calibration\": {\"method\": \"none\"}, \"spectra\"");
    let dir = with_config(&cfg);
    ok(dir.path(), &["--config", "cfg.json", "fit"]);
    let model: ClassModel =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/model.json")).unwrap()).unwrap();
    let n = model.feature_len();
    for c in &model.classes {
        assert_eq!(c.lambda_rmse, ScaleFactors::ones(n));
    }
}

#[test]
fn zero_validation_budget_with_closed_form_is_an_error() {
    let dir = with_config(&SMALL.replace("\"val\": 4", "\"val\": 0"));
    let out = sigclass(dir.path(), &["--config", "cfg.json", "fit"]);
    assert_eq!(error_kind(&out), "contract");
    assert!(!dir.path().join("out/model.json").exists());
}

#[test]
fn optimizer_calibration_runs_from_config() {
    let cfg = SMALL.replace(
        "\"spectra\"",
        "\"calibration\": {\"method\": \"optimize\", \"iterations\": 20, \"batch\": 2}, \"spectra\"",
    );
    let dir = with_config(&cfg);
    ok(dir.path(), &["--config", "cfg.json", "--out", "a", "fit"]);
    ok(dir.path(), &["--config", "cfg.json", "--out", "b", "fit"]);
    assert_eq!(
        fs::read(dir.path().join("a/model.json")).unwrap(),
        fs::read(dir.path().join("b/model.json")).unwrap()
    );
}

#[test]
fn eval_errors() {
    let dir = with_config(SMALL);
    let out = sigclass(dir.path(), &["--config", "cfg.json", "eval", "--model", "missing.json"]);
    assert_eq!(error_kind(&out), "io");
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = sigclass(dir.path(), &["--config", "cfg.json", "eval", "--protocol", "best"]);
    assert_eq!(error_kind(&out), "config");
    let out = sigclass(dir.path(), &["--no-such-flag"]);
    assert_eq!(error_kind(&out), "usage");
    fs::write(dir.path().join("bad.json"), "{\"order\": \"two\"}").unwrap();
    let out = sigclass(dir.path(), &["--config", "bad.json", "fit"]);
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn spectra_writes_one_csv_per_class_and_clamps() {
    let dir = with_config(SMALL);
    ok(dir.path(), &["--config", "cfg.json", "fit"]);
    ok(dir.path(), &["--config", "cfg.json", "spectra"]);
    let out = sigclass(dir.path(), &["--config", "cfg.json", "--out", "wide", "spectra", "--model", "out/model.json", "--window", "20001"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("clamped"));
    let csvs: Vec<_> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("spectrum_"))
        .collect();
    assert_eq!(csvs.len(), 4);
    let text = fs::read_to_string(dir.path().join("out/spectrum_00_square.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,raw_abs,smoothed"));
    // Rows-as-steps on 8x8 grayscale with basepoint: d = 8, N = 2.
    assert_eq!(lines.count(), 8 + 64);
}

#[test]
fn embed_emits_requested_rows_deterministically() {
    let dir = with_config(SMALL);
    ok(dir.path(), &["--config", "cfg.json", "--out", "a", "embed"]);
    ok(dir.path(), &["--config", "cfg.json", "--out", "b", "embed"]);
    let a = fs::read_to_string(dir.path().join("a/embedding.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b/embedding.csv")).unwrap());
    assert_eq!(a.lines().next(), Some("x,y,label"));
    assert_eq!(a.lines().count(), 21);
    let out = sigclass(dir.path(), &["--config", "cfg.json", "embed", "--perplexity", "7"]);
    assert_eq!(error_kind(&out), "contract");
}
