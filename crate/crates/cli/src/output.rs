//! Atomic file emission and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::commands::Command;
use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// A named output held in memory until every computation has succeeded.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Self { name: name.into(), contents: contents.into() }
    }
}

/// Config snapshot, library version and output list. The timestamp lives
/// here only, so the data files stay byte-identical across runs.
pub fn manifest(command: Command, config: &RunConfig, artifacts: &[Artifact], threads: Option<usize>) -> String {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let value = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": created,
        "threads": threads,
        "config": config,
        "config_toml": config.to_toml(),
        "outputs": artifacts.iter().map(|a| &a.name).collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&value).expect("manifest serializes") + "\n"
}

/// Stages every file as a temporary in `dir`, then renames them into place,
/// the manifest last.
pub fn write_all(dir: &Path, artifacts: &[Artifact], manifest: &str) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(artifacts.len() + 1);
    let entries = artifacts.iter().map(|a| (a.name.as_str(), a.contents.as_str()));
    for (name, contents) in entries.chain(std::iter::once((MANIFEST, manifest))) {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| CliError::Io(e.to_string()))?;
        written.push(target);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_files_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let arts = [Artifact::new("a.csv", "x\n1\n"), Artifact::new("b.txt", "hello")];
        let paths = write_all(dir.path(), &arts, "{}\n").unwrap();
        assert_eq!(paths.len(), 3);
        assert_eq!(std::fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n1\n");
        let mut names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["a.csv", "b.txt", MANIFEST]);
    }
}
