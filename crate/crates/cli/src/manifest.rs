use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use triadcal_core::schema::{self, RUN_MANIFEST_SCHEMA};
use triadcal_core::session::{Clock, SystemClock};
use triadcal_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to the outputs of every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub inputs: Vec<InputHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    /// UTC milliseconds.
    pub started_at: u64,
    pub duration_ms: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects inputs and outputs while a command runs.
pub struct Recorder {
    command: String,
    arguments: Vec<String>,
    inputs: Vec<InputHash>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    started_at: u64,
    start: Instant,
}

impl Recorder {
    pub fn new(command: &str, arguments: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            arguments,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_at: SystemClock.now_ms(),
            start: Instant::now(),
        }
    }

    /// Hashes an input before it is read for processing.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            command: self.command,
            arguments: self.arguments,
            inputs: self.inputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            started_at: self.started_at,
            duration_ms: self.start.elapsed().as_millis() as u64,
        }
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        schema::write_document(path, RUN_MANIFEST_SCHEMA, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        schema::read_document(path, RUN_MANIFEST_SCHEMA)
    }
}

/// Where the manifest of a command goes: beside a file output, inside a directory output.
pub fn manifest_path(primary_output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        primary_output.join("manifest.json")
    } else {
        let mut name = primary_output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        primary_output.with_file_name(name)
    }
}
