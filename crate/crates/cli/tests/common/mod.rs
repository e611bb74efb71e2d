//! Helpers shared by the CLI integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn tten(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tten"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("cannot start tten")
}

/// Runs `tten` and panics with its stderr unless it succeeds.
pub fn tten_ok(args: &[&str]) -> Output {
    let out = tten(args);
    assert!(
        out.status.success(),
        "tten {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small synthetic dataset written by `tten generate`; returns (train, test).
pub fn tiny_dataset(root: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let dir = root.join(format!("data-{seed}"));
    tten_ok(&[
        "generate",
        "--users",
        "40",
        "--items",
        "30",
        "--interactions-per-user",
        "6",
        "--test-items-per-user",
        "5",
        "--seed",
        &seed.to_string(),
        "--out",
        s(&dir),
    ]);
    (dir.join("train.txt"), dir.join("test.txt"))
}

pub fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    read_json(&path)
}

/// Panics with every violation when `instance` does not match the schema.
pub fn assert_valid(schema_name: &str, instance: &Value) {
    let schema = schema(schema_name);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:#?}");
}
