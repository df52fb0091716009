#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn epx(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epx"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EPX_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn epx")
}

pub fn epx_ok(args: &[&str], cwd: &Path) -> Output {
    let out = epx(args, cwd);
    assert!(
        out.status.success(),
        "epx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// A small planted dataset at `dir/s/data.csv`.
pub fn small_synth(dir: &Path) {
    epx_ok(
        &["synth", "--n", "240", "--active-fraction", "0.1", "--noise", "8", "--strength", "0.7", "--seed", "5", "--out", "s"],
        dir,
    );
}
