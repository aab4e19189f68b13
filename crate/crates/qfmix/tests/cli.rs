use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qfmix(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfmix"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qfmix-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_exit_codes() {
    let dir = scratch("check");
    let ok = write(&dir, "ok.arch", "input_dim 16\nclasses 2\nlayer v width=4 r=2\nlayer u width=4\nlayer n width=4\nlayer p width=2\n");
    let bad = write(&dir, "bad.arch", "input_dim 4\nclasses 1\nlayer v width=2 view=amplitude\nlayer p width=1 gadget=product\n");
    let broken = write(&dir, "broken.arch", "input_dim 16\nlayer q width=4\n");

    let out = qfmix(&["check", "--arch", &ok], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ok.report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["mid_circuit_measurements"], 0);

    let out = qfmix(&["check", "--arch", &bad], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    assert_eq!(qfmix(&["check", "--arch", &broken], &dir).status.code(), Some(2));
    assert_eq!(qfmix(&["check", "--arch", "missing.arch"], &dir).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn untrained_checkpoint_evaluates_near_chance() {
    let dir = scratch("eval");
    let arch = write(&dir, "vu.arch", "input_dim 8\nclasses 2\nlayer v width=3\nlayer u width=2\n");
    let out = qfmix(
        &["train", "--arch", &arch, "--dataset", "cap", "--epochs", "0", "--out", "untrained"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "checkpoint.json", "metrics.csv", "result.csv"] {
        assert!(dir.join("untrained").join(f).exists(), "{f}");
    }
    let out = qfmix(
        &["eval", "--checkpoint", "untrained/checkpoint.json", "--dataset", "cap", "--out", "eval"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rows = csv::Reader::from_path(dir.join("eval/result.csv")).unwrap();
    let row: std::collections::HashMap<String, String> = rows.deserialize().next().unwrap().unwrap();
    let acc: f64 = row["test_accuracy"].parse().unwrap();
    assert!((30.0..=70.0).contains(&acc), "{acc}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn training_twice_gives_identical_metrics() {
    let dir = scratch("repro");
    let arch = write(&dir, "vup.arch", "input_dim 8\nclasses 2\nlayer v width=3 r=2\nlayer u width=4\nlayer p width=2\n");
    for run in ["a", "b"] {
        let out = qfmix(&["train", "--arch", &arch, "--dataset", "cap", "--epochs", "2", "--seed", "4", "--out", run], &dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |run: &str| std::fs::read_to_string(dir.join(run).join("metrics.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    let manifest = std::fs::read_to_string(dir.join("a/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 4") || manifest.contains("\"seed\":4"), "{manifest}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_demo_reports_the_path6_gap() {
    let dir = scratch("verify");
    let out = qfmix(&["verify", "--demo-path6", "--samples", "10", "--out", "v"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let dev: f64 = text
        .split("max deviation ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev > 0.01, "{text}");
    assert!(dir.join("v/verify.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn single_value_sweep_writes_one_row() {
    let dir = scratch("sweep");
    let arch = write(&dir, "vu.arch", "input_dim 8\nclasses 2\nlayer v width=3\nlayer u width=2\n");
    let out = qfmix(
        &["sweep", "--arch", &arch, "--dataset", "cap", "--epochs", "1", "--r-min", "2", "--r-max", "2", "--out", "s"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("s/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("2,"));
    std::fs::remove_dir_all(&dir).ok();
}
