//! Append-only run manifests with content digests of every input and output.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{FileError, FileResult};

pub const MANIFEST_FILE: &str = "harmload-manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> FileResult<Self> {
        let data = std::fs::read(path).map_err(|e| FileError::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub tool_version: String,
    pub started_unix_seconds: f64,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            args,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or(Duration::ZERO)
                .as_secs_f64(),
            duration_seconds: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> FileResult<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> FileResult<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Default manifest location: beside the first output.
    pub fn default_path(&self) -> PathBuf {
        let dir = self
            .outputs
            .first()
            .and_then(|o| Path::new(&o.path).parent().map(Path::to_path_buf))
            .unwrap_or_default();
        dir.join(MANIFEST_FILE)
    }

    /// Appends this run as one JSON line.
    pub fn append(&self, path: &Path) -> FileResult<()> {
        let mut line = serde_json::to_string(self).expect("manifest serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| FileError::io(path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| FileError::io(path, e))
    }
}
