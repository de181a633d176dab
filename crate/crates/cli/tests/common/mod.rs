#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn segpipe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_segpipe"))
}

pub fn mock_scorer() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_segpipe-mock-scorer"))
}

/// Runs `segpipe` with `args`, returning the output.
pub fn run(args: &[&str]) -> Output {
    segpipe().args(args).output().expect("segpipe runs")
}

/// Runs `segpipe` and panics with its stderr unless it succeeds.
pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "segpipe {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// A synthetic dataset under `dir/data`, returning the manifest path.
pub fn synth(dir: &Path, domains: usize, count: usize, size: usize, seed: u64) -> PathBuf {
    let data = dir.join("data");
    ok(&[
        "synth",
        "--domains",
        &domains.to_string(),
        "--count",
        &count.to_string(),
        "--size",
        &size.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&data),
    ]);
    data.join("manifest.json")
}
