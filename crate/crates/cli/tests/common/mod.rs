#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use svs_cli::{Profile, RunConfig};

/// Runs the `svs` binary inside `dir`.
pub fn svs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svs"))
        .args(args)
        .current_dir(dir)
        .env_remove("SVS_CONFIG")
        .output()
        .expect("spawn svs")
}

/// Runs `svs` and returns its standard output, panicking on failure.
pub fn svs_ok(dir: &Path, args: &[&str]) -> String {
    let out = svs(dir, args);
    assert!(
        out.status.success(),
        "svs {args:?} exited with {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The configuration a run in `dir` sees, with every path made absolute.
pub fn config_in(dir: &Path, profile: Profile, overrides: &[String]) -> RunConfig {
    let mut cfg = RunConfig::load(profile, None, overrides).expect("config");
    let p = &mut cfg.paths;
    for path in [
        &mut p.audio_dir,
        &mut p.alignment_dir,
        &mut p.segment_dir,
        &mut p.score_file,
        &mut p.feature_dir,
        &mut p.checkpoint_dir,
        &mut p.embedding_dir,
        &mut p.output_dir,
    ] {
        *path = dir.join(&*path);
    }
    cfg
}

/// Every regular file below `root`, as sorted paths relative to it.
pub fn files_under(root: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push(path.strip_prefix(root).expect("below root").to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Relative paths whose bytes differ between two trees, including files
/// present in only one of them.
pub fn differing_files(a: &Path, b: &Path) -> Vec<PathBuf> {
    let fa = files_under(a);
    let fb = files_under(b);
    let mut diff: Vec<PathBuf> = fa.iter().filter(|f| !fb.contains(f)).cloned().collect();
    diff.extend(fb.iter().filter(|f| !fa.contains(f)).cloned());
    for f in fa.iter().filter(|f| fb.contains(f)) {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            diff.push(f.clone());
        }
    }
    diff.sort();
    diff
}
