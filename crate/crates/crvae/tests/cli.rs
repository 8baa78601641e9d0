use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crvae::manifest::RunManifest;

fn crvae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crvae"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = crvae(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn metric(report: &str, name: &str) -> f64 {
    let line = report.lines().find(|l| l.starts_with(&format!("{name}\t"))).expect("metric line");
    let fields: Vec<&str> = line.split('\t').collect();
    assert_eq!(fields.len(), 3, "{line}");
    fields[1].parse().unwrap()
}

fn ones(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .flat_map(|l| l.split(',').map(str::to_owned).collect::<Vec<_>>())
        .filter(|f| f == "1")
        .count()
}

const SMALL: &str = r#"{"tau": 3, "hidden": 6, "layers": 1, "batch_size": 32, "epochs_phase1": 2, "epochs_phase2": 1, "lambda": 0.01}"#;

#[test]
fn simulate_writes_data_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "henon", "--out", "h.csv", "--seed", "4"]);
    let rows = fs::read_to_string(d.join("h.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2049);
    assert_eq!(rows.lines().nth(1).unwrap().split(',').count(), 6);
    assert_eq!(ones(&d.join("h_truth.csv")), 11);
    let man = RunManifest::read(&d.join("h_manifest.json")).unwrap();
    assert_eq!(man.command, "simulate");
    assert_eq!(man.seed, Some(4));
    assert_eq!(man.outputs.len(), 2);

    ok(d, &["simulate", "lorenz96", "--out", "l.csv"]);
    assert_eq!(ones(&d.join("l_truth.csv")), 40);
    ok(d, &["simulate", "var", "--out", "v.csv", "--length", "300"]);
    assert_eq!(fs::read_to_string(d.join("v.csv")).unwrap().lines().count(), 301);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = crvae(d, &["simulate", "henon"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
    assert_eq!(crvae(d, &["simulate", "lorenz96", "--out", "x.csv", "--series", "2"]).status.code(), Some(2));
    assert_eq!(crvae(d, &["simulate", "pendulum", "--out", "x.csv"]).status.code(), Some(2));
    assert_eq!(
        crvae(d, &["generate", "--checkpoint", "m.ckpt", "--out", "g", "--count", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn default_config_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["train", "--print-config"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["tau"], 10);
    assert_eq!(v["batch_size"], 256);
    assert_eq!(v["hidden"], 64);
    assert_eq!(v["normalize"], false);
    let text = ok(
        dir.path(),
        &["train", "--print-config", "--normalize", "--no-compensation", "--encoder-mode", "overlap", "--cell", "vanilla", "--seed", "7"],
    );
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["compensation"], false);
    assert_eq!(v["encoder_mode"], "overlap");
    assert_eq!(v["cell"], "vanilla");
    assert_eq!(v["seed"], 7);
    assert_eq!(v["normalize"], true);
}

#[test]
fn config_violations_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"tau": 0, "lr": -1, "layers": 0}"#).unwrap();
    let out = crvae(d, &["train", "--print-config", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for field in ["tau", "lr", "layers"] {
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn train_generate_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "henon", "--out", "h.csv", "--length", "400", "--series", "3"]);
    fs::write(d.join("small.json"), SMALL).unwrap();
    ok(d, &["train", "--data", "h.csv", "--config", "small.json", "--out", "m.ckpt"]);
    for f in ["m.ckpt", "m_adjacency.csv", "m_loss.csv", "m_manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(d.join("m_loss.csv")).unwrap().lines().count(), 4);

    ok(d, &["train", "--data", "h.csv", "--config", "small.json", "--out", "n.ckpt", "--no-compensation"]);
    assert_eq!(
        fs::read(d.join("m_adjacency.csv")).unwrap(),
        fs::read(d.join("n_adjacency.csv")).unwrap()
    );

    ok(d, &["generate", "--checkpoint", "m.ckpt", "--out", "g", "--length", "20", "--count", "10", "--seed", "3"]);
    let files: Vec<_> = (0..10).map(|i| d.join(format!("g/synth_{i:03}.csv"))).collect();
    for f in &files {
        let text = fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 3);
    }
    ok(d, &["generate", "--checkpoint", "m.ckpt", "--out", "g2", "--length", "20", "--count", "10", "--seed", "3"]);
    for i in 0..10 {
        let name = format!("synth_{i:03}.csv");
        assert_eq!(fs::read(d.join("g").join(&name)).unwrap(), fs::read(d.join("g2").join(&name)).unwrap());
    }

    let r = ok(d, &["eval", "causal", "--scores", "h_truth.csv", "--truth", "h_truth.csv"]);
    assert_eq!(metric(&r, "auroc"), 1.0);
    let r = ok(d, &["eval", "causal", "--scores", "m.ckpt", "--truth", "h_truth.csv"]);
    let a = metric(&r, "auroc");
    assert!((0.0..=1.0).contains(&a));
    let summary: serde_json::Value = serde_json::from_str(r.lines().last().unwrap()).unwrap();
    assert_eq!(summary["metrics"]["auroc"], a);

    let out = crvae(d, &["eval", "causal", "--scores", "m_adjacency.csv"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--truth"));

    let r = ok(d, &["eval", "mmd", "--real", "h.csv", "--synth", "h.csv", "--samples", "50"]);
    assert_eq!(metric(&r, "mmd"), 0.0);
    let mut args = vec!["eval", "mmd", "--real", "h.csv", "--samples", "50", "--export", "pc.csv", "--synth"];
    let names: Vec<String> = files.iter().map(|f| f.to_string_lossy().into_owned()).collect();
    args.extend(names.iter().map(String::as_str));
    let r = ok(d, &args);
    assert!(metric(&r, "mmd") > 0.0);
    let pc = fs::read_to_string(d.join("pc.csv")).unwrap();
    assert_eq!(pc.lines().count(), 101);
    assert!(pc.lines().nth(1).unwrap().ends_with(",real"));
    assert!(pc.lines().last().unwrap().ends_with(",synth"));

    fs::write(d.join("t.json"), r#"{"hidden": 4, "layers": 1, "max_epochs": 2, "lr": 0.01}"#).unwrap();
    let r = ok(d, &["eval", "tstr", "--real", "h.csv", "--synth", "g/synth_000.csv", "g/synth_001.csv", "--config", "t.json", "--trtr", "--out", "tstr.tsv"]);
    assert!(metric(&r, "tstr_rmse") > 0.0);
    assert!(metric(&r, "trtr_rmse") > 0.0);
    assert_eq!(fs::read_to_string(d.join("tstr.tsv")).unwrap(), r);
    assert!(d.join("tstr_manifest.json").exists());

    let r = ok(d, &["eval", "te", "--data", "h.csv", "--truth", "h_truth.csv", "--max-samples", "64", "--matrix", "te.csv"]);
    assert!((0.0..=1.0).contains(&metric(&r, "auroc")));
    assert!(d.join("te.csv").exists());

    let out = crvae(d, &["generate", "--checkpoint", "missing.ckpt", "--out", "g3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn manifests_replay_to_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "henon", "--out", "h.csv", "--length", "300", "--series", "2"]);
    fs::write(d.join("small.json"), SMALL).unwrap();
    ok(d, &["train", "--data", "h.csv", "--config", "small.json", "--out", "m.ckpt", "--seed", "5"]);
    for name in ["h_manifest.json", "m_manifest.json"] {
        let man = RunManifest::read(&d.join(name)).unwrap();
        let before: Vec<_> = man.outputs.iter().map(|o| o.sha256.clone()).collect();
        let args: Vec<&str> = man.args.iter().map(String::as_str).collect();
        ok(d, &args);
        let again = RunManifest::read(&d.join(name)).unwrap();
        let after: Vec<_> = again.outputs.iter().map(|o| o.sha256.clone()).collect();
        assert_eq!(before, after, "{name}");
        assert_eq!(again, man);
    }
}
