use std::fs;
use std::process::Command;

use tempfile::TempDir;

fn evoprune() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evoprune"))
}

fn ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> TempDir {
    let tmp = TempDir::new().unwrap();
    ok(evoprune()
        .args([
            "synth",
            "--train",
            "60",
            "--test",
            "30",
            "--dim",
            "10",
            "--informative",
            "3",
            "--out",
        ])
        .arg(tmp.path()));
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"dataset": {"path": "train.eptl", "test_path": "test.eptl", "name": "toy"},
            "hidden_sizes": [4], "mode": "evolve-fs",
            "ga": {"population_size": 4, "max_evals": 8},
            "train": {"max_epochs": 15, "learning_rate": 0.05}, "n_runs": 2}"#,
    )
    .unwrap();
    tmp
}

#[test]
fn validate_dataset_prints_shape() {
    let tmp = setup();
    let out = ok(evoprune()
        .arg("validate-dataset")
        .arg(tmp.path().join("train.eptl")));
    assert!(out.contains("n=60 d=10 C=3"), "{out}");
    assert!(out.contains("class counts: 20 20 20"), "{out}");
}

#[test]
fn malformed_dataset_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.eptl");
    fs::write(&path, b"EPTX\x01\x00\x00\x00").unwrap();
    let out = evoprune()
        .arg("validate-dataset")
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn evolve_then_baseline_then_report() {
    let tmp = setup();
    let cfg = tmp.path().join("cfg.json");
    let ga = tmp.path().join("ga");
    let out = ok(evoprune()
        .arg("evolve")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&ga)
        .args(["--evals", "10", "--seed", "3"]));
    assert!(out.contains("evolve-fs"));
    assert_eq!(
        fs::read_to_string(ga.join("evals_run1.log"))
            .unwrap()
            .lines()
            .count(),
        10
    );
    assert!(fs::read_to_string(ga.join("runs.csv"))
        .unwrap()
        .contains("\n1,4,"));

    let bw = tmp.path().join("bw");
    ok(evoprune()
        .arg("baseline")
        .arg("--config")
        .arg(&cfg)
        .args([
            "--mode",
            "baseline-weight",
            "--runs",
            "1",
            "--reference-report",
        ])
        .arg(&ga)
        .arg("--out")
        .arg(&bw));

    let combined = tmp.path().join("combined");
    let out = ok(evoprune()
        .arg("report")
        .arg(&ga)
        .arg(&bw)
        .arg("--out")
        .arg(&combined));
    assert!(out.contains("baseline-weight"));
    let csv = fs::read_to_string(combined.join("report.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "dataset,metric,evolve-fs,baseline-weight"
    );
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn wrong_subcommand_for_mode_fails() {
    let tmp = setup();
    let out = evoprune()
        .arg("reference")
        .arg("--config")
        .arg(tmp.path().join("cfg.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = evoprune()
        .arg("baseline")
        .arg("--config")
        .arg(tmp.path().join("cfg.json"))
        .args(["--mode", "baseline-neuron"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing reference report"));
}
