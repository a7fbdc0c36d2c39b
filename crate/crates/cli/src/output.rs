//! Atomic artifact writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Provenance record written next to a command's artifacts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// File names relative to the manifest's directory.
    pub artifacts: Vec<String>,
    /// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` so reruns stay
    /// byte-identical; absent when the variable is unset.
    pub timestamp: Option<u64>,
}

/// Writes `contents` to a temporary file beside `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut file = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    file.write_all(contents).map_err(|e| CliError::io(path, e))?;
    file.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// A command's output directory; every file written through it is listed in
/// the manifest.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<PathBuf> {
        if name == MANIFEST_NAME || self.artifacts.iter().any(|a| a == name) {
            return Err(CliError::Usage(format!("artifact `{name}` would be written twice")));
        }
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    pub fn finish(self, command: &str, config: &impl Serialize, seed: Option<u64>) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            tool: "peg".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config).expect("flags serialize"),
            seed,
            artifacts: self.artifacts,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_each_artifact_once() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&tmp.path().join("run")).unwrap();
        out.write("a.txt", "alpha\n").unwrap();
        out.write("b.txt", "beta\n").unwrap();
        assert!(out.write("a.txt", "again\n").is_err());
        assert!(out.write(MANIFEST_NAME, "{}").is_err());
        let manifest = out.finish("test", &serde_json::json!({"k": 1}), Some(7)).unwrap();
        assert_eq!(manifest.artifacts, vec!["a.txt", "b.txt"]);
        let text = fs::read_to_string(tmp.path().join("run").join(MANIFEST_NAME)).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["seed"], 7);
        assert_eq!(parsed["config"]["k"], 1);
        assert_eq!(fs::read_to_string(tmp.path().join("run/a.txt")).unwrap(), "alpha\n");
    }
}
