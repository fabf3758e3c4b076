//! End-to-end runs of the `attriq` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn attriq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attriq"))
        .args(args)
        .env_remove("ATTRIQ_SEED")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(attriq(&["--help"]).status.code(), Some(0));
    assert_eq!(attriq(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(attriq(&["gen"]).status.code(), Some(1), "missing --out is a usage error");
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = attriq(&["eval", "--data", path(&missing), "--model", "fixture:planted", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn gen_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(attriq(&["gen", "--seed", seed, "--out", path(&out)]).status.success());
        fs::read(out.join("dataset.jsonl")).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}

#[test]
fn flags_override_config_file_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 5\nkind = \"classifier\"\nsize = 12\n").unwrap();

    let from_file = dir.path().join("file");
    assert!(attriq(&["gen", "--config", path(&cfg), "--out", path(&from_file)]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(from_file.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "gen");
    let lines = fs::read_to_string(from_file.join("dataset.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 12);

    let flagged = dir.path().join("flag");
    assert!(attriq(&["gen", "--config", path(&cfg), "--seed", "9", "--out", path(&flagged)]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(flagged.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);

    let env = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_attriq"))
        .args(["gen", "--out", path(&env)])
        .env("ATTRIQ_SEED", "21")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(env.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 21);

    fs::write(&cfg, "sede = 5\n").unwrap();
    assert_eq!(attriq(&["gen", "--config", path(&cfg), "--out", path(&env)]).status.code(), Some(1));
}

#[test]
fn every_run_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("gen");
    assert!(attriq(&["gen", "--seed", "1", "--out", path(&data)]).status.success());
    let dataset = data.join("dataset.jsonl");
    let eval = dir.path().join("eval");
    let out = attriq(&["eval", "--data", path(&dataset), "--model", "fixture:planted", "--out", path(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "attriq");
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"predictions.jsonl") && outputs.contains(&"eval.json"), "{outputs:?}");
    for o in outputs {
        assert!(eval.join(o).exists(), "{o}");
    }
}
