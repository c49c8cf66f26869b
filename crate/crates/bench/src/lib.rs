//! Benchmark harness support for the protocol corpus.

use std::path::{Path, PathBuf};

/// The corpus directory at the workspace root.
pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Splits a `name-N.tq` file name into the protocol name and the session
/// count.
pub fn protocol_and_sessions(path: &Path) -> (String, Option<u32>) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rsplit_once('-') {
        Some((name, n)) => match n.parse() {
            Ok(n) => (name.to_string(), Some(n)),
            Err(_) => (stem, None),
        },
        None => (stem, None),
    }
}

/// The `.tq` files of `dir`, ordered by protocol and session count.
pub fn protocol_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tq"))
        .collect();
    files.sort_by_key(|p| protocol_and_sessions(p));
    Ok(files)
}
