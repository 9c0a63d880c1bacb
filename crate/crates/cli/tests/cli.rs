use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn decontam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decontam"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn two_atoms(dir: &Path) {
    std::fs::write(
        dir.join("pair.json"),
        r#"{"atoms":["a","b","c"],"sources":[
            {"index":0,"mass":[0.5,0.5,0.0]},
            {"index":1,"mass":[1.0,0.0,0.0]},
            {"index":2,"mass":[0.0,0.0,1.0]}]}"#,
    )
    .unwrap();
}

#[test]
fn synth_demix_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("spec.json"),
        r#"{"L":3,"M":3,"bases":{"kind":"anchored_discrete","atoms":8},"mixing":{"random":{"min_singular_value":0.05}},"seed":3}"#,
    )
    .unwrap();
    let report = ok_json(decontam(dir, &["synth", "--spec", "spec.json", "--out", "inst"]));
    assert_eq!(report["joint_irreducibility"], Value::Bool(true));
    let run = decontam(
        dir,
        &["demix", "--dataset", "inst/dataset.json", "--seed", "1", "--trace", "trace.csv", "--out", "r.json"],
    );
    assert!(run.status.success() && run.stdout.is_empty(), "--out keeps stdout empty");
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("level,n,nu,face_test,residue,coords\n"));
    let score = ok_json(decontam(dir, &["evaluate", "--estimates", "r.json", "--truth", "inst/truth.json"]));
    assert!(score["max_distance"].as_f64().unwrap() < 1e-7, "{score}");
}

#[test]
fn partial_labels_come_back_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("spec.json"),
        r#"{"L":3,"M":3,"bases":{"kind":"anchored_discrete","atoms":8},"mixing":{"random":{"min_singular_value":0.05}},"labels":"random","seed":9}"#,
    )
    .unwrap();
    ok_json(decontam(dir, &["synth", "--spec", "spec.json", "--out", "inst"]));
    let run = decontam(
        dir,
        &["partial-label", "--dataset", "inst/dataset.json", "--labels", "inst/labels.json", "--out", "r.json"],
    );
    assert!(run.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "partial-label");
    assert!(report["k"].as_u64().unwrap() >= 2);
    let score = ok_json(decontam(
        dir,
        &["evaluate", "--estimates", "r.json", "--truth", "inst/truth.json", "--mode", "exact"],
    ));
    assert_eq!(score["permutation"], serde_json::json!([0, 1, 2]));
    assert!(score["max_distance"].as_f64().unwrap() < 1e-7);
}

#[test]
fn kappa_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    two_atoms(dir);
    let two = ok_json(decontam(dir, &["kappa", "--dataset", "pair.json", "--others", "1"]));
    assert_eq!(two["kappa"].as_f64(), Some(0.5));
    assert!(two.get("nus").is_none());
    assert_eq!(two["dependency_set"], serde_json::json!([0, 1]));

    let multi = ok_json(decontam(dir, &["kappa", "--dataset", "pair.json", "--others", "1,2"]));
    assert_eq!(multi["kappa"].as_f64(), Some(0.5));
    assert_eq!(multi["nus"].as_array().unwrap().len(), 2);
    let weights: f64 = multi["residue_weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["weight"].as_f64().unwrap())
        .sum();
    assert!((weights - 1.0).abs() < 1e-12);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    two_atoms(dir);
    let cases: [(&[&str], &str); 4] = [
        (&["kappa", "--dataset", "missing.json"], "missing.json"),
        (&["kappa", "--dataset", "pair.json", "--target", "7"], "distinct sources"),
        (&["demix", "--dataset", "pair.json", "--engine", "empirical"], "penalty-scale 0"),
        (&["evaluate", "--sweep", "n=abc", "--spec", "pair.json"], "sample size"),
    ];
    for (args, needle) in cases {
        let out = decontam(dir, args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with("error: ") && err.contains(needle), "{args:?}: {err}");
    }
}
