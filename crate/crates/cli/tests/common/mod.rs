#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn conflabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conflabel")).args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// A small paired synthetic experiment; `extra` is appended verbatim.
pub fn write_config(dir: &Path, train: &str, noise: &str) -> PathBuf {
    let text = format!(
        r#"output = "out"

[dataset]
kind = "synthetic"
per_class = 100
test_per_class = 100

[noise]
{noise}

[train]
{train}
"#
    );
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Every regular file under `dir`, relative path → bytes.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn no_partial_files(dir: &Path) -> bool {
    snapshot(dir).iter().all(|(p, _)| !p.to_string_lossy().ends_with(".partial"))
}
