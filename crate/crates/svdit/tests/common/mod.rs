#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn svdit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svdit"))
        .current_dir(dir)
        .args(args)
        .env_remove("SVDIT_THREADS")
        .output()
        .expect("svdit binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = svdit(dir, args);
    assert!(
        out.status.success(),
        "svdit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn exit_code(dir: &Path, args: &[&str]) -> i32 {
    svdit(dir, args).status.code().expect("exited normally")
}

/// L=2, H=4, d=8, T=4 with one head planted per pattern.
pub const SMALL_SPEC: &str = r#"{
  "layers": 2, "heads": 4, "head_dim": 8, "timesteps": 4, "seed": 3,
  "layout": {"text_tokens": 16, "frames": 4, "tokens_per_frame": 64, "block_size": 16},
  "plant": [
    {"layer": 0, "head": 1, "kind": "diagonal"},
    {"layer": 0, "head": 2, "kind": "multi_diagonal"},
    {"layer": 1, "head": 2, "kind": {"vertical_stripe": 2}},
    {"layer": 1, "head": 3, "kind": "redundant"}
  ]
}"#;

pub fn write_spec(dir: &Path) -> PathBuf {
    let path = dir.join("spec.json");
    std::fs::write(&path, SMALL_SPEC).unwrap();
    path
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

pub fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_slice(&read(path)).unwrap()
}
