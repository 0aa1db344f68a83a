//! Stores at fixed points of the case study.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use agilev::fixture::{Driver, Options, Stage};
use agilev::store::STATE_DIR;
use agilev::Store;
use agilev_core::{ProjectConfig, Timestamp};
use tempfile::TempDir;

/// A day after the fixture's first command; later than any fixture entry.
pub const LATER: Timestamp = Timestamp::from_unix(1_770_022_800 + 86_400);

pub fn staged_with(stage: Stage, options: Options) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::init(dir.path(), ProjectConfig::default(), false).unwrap();
    Driver::new(&mut store, options).unwrap().run_to(stage).unwrap();
    dir
}

pub fn staged(stage: Stage) -> TempDir {
    staged_with(stage, Options::default())
}

/// Every file of the state directory except the lock, by relative path.
pub fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else if path.file_name().is_some_and(|n| n != ".lock") {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(&root.join(STATE_DIR), &root.join(STATE_DIR), &mut out);
    out
}

pub fn digest(root: &Path) -> String {
    agilev::content_digest(&root.join(STATE_DIR)).unwrap()
}
