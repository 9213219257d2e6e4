#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

/// Run the CLI in-process; returns captured stdout.
pub fn run(args: &[&str]) -> autolabel::Result<String> {
    let mut out = Vec::new();
    let argv = std::iter::once("autolabel").chain(args.iter().copied());
    autolabel::cli::run(argv, None, &mut out)?;
    Ok(String::from_utf8(out).expect("utf-8 output"))
}

pub fn bundled_conf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/bundled.conf")
}

/// Copy the bundled scenario into `dir` and generate its data there, as the
/// comments in the config describe. Returns the copied config path.
pub fn bundled_scenario(dir: &Path) -> PathBuf {
    let conf = dir.join("bundled.conf");
    fs::copy(bundled_conf(), &conf).unwrap();
    let data = dir.join("data");
    for (mode, n, sub) in [("simple", "64", "simple"), ("cluttered", "200", "cluttered")] {
        let out = data.join(sub);
        run(&[
            "gen",
            "--mode",
            mode,
            "--n",
            n,
            "--seed",
            "0",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
    }
    conf
}

/// Relative path to contents, for every file below `root`.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}
