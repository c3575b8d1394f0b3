//! Output directories: locking, artifact bookkeeping and `run.json`.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const RUN_SCHEMA: &str = "ucbs.run";
pub const RUN_VERSION: u32 = 1;
const LOCK_NAME: &str = ".ucbs.lock";

/// An output directory held for the duration of one command.
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    schema: &'static str,
    version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config_hash: String,
    parameters: &'a serde_json::Value,
    /// Relative path -> SHA-256 of every artifact written by the run.
    artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl OutputDir {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let lock = root.join(LOCK_NAME);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => CliError::Locked(lock.clone()),
                _ => CliError::io(&lock, e),
            })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            lock,
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `rel`, creating parent directories.
    pub fn path(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(p)
    }

    /// Registers a file written by other code.
    pub fn record(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let p = self.path(rel)?;
        let mut text = serde_json::to_string_pretty(value).map_err(ucbs_core::Error::from)?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.record(p.clone());
        Ok(p)
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.record(p.clone());
        Ok(p)
    }

    /// Writes `run.json` with resolved parameters and artifact hashes.
    pub fn finish(mut self, command: &str, parameters: &serde_json::Value, seed: Option<u64>) -> Result<(), CliError> {
        let canonical = serde_json::to_string(&(command, parameters)).map_err(ucbs_core::Error::from)?;
        let mut artifacts = BTreeMap::new();
        for p in std::mem::take(&mut self.artifacts) {
            let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            let rel = p.strip_prefix(&self.root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            artifacts.insert(rel, sha256_hex(&bytes));
        }
        let record = RunRecord {
            schema: RUN_SCHEMA,
            version: RUN_VERSION,
            tool: "ucbs",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_hash: sha256_hex(canonical.as_bytes()),
            parameters,
            artifacts,
        };
        self.write_json("run.json", &record)?;
        Ok(())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_open_is_locked_until_the_first_drops() {
        let d = tempfile::tempdir().unwrap();
        let first = OutputDir::open(d.path()).unwrap();
        assert!(matches!(OutputDir::open(d.path()), Err(CliError::Locked(_))));
        drop(first);
        assert!(OutputDir::open(d.path()).is_ok());
    }

    #[test]
    fn run_record_hashes_artifacts_and_parameters() {
        let d = tempfile::tempdir().unwrap();
        let mut out = OutputDir::open(d.path()).unwrap();
        out.write_bytes("sub/a.txt", b"abc").unwrap();
        let params = serde_json::json!({ "alpha": 0.05 });
        out.finish("rank", &params, Some(7)).unwrap();
        let run: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(run["schema"], RUN_SCHEMA);
        assert_eq!(run["seed"], 7);
        assert_eq!(
            run["artifacts"]["sub/a.txt"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let again = sha256_hex(serde_json::to_string(&("rank", &params)).unwrap().as_bytes());
        assert_eq!(run["config_hash"], again);
        assert!(!d.path().join(LOCK_NAME).exists());
    }
}
