use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file read or written by a run, with its digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path, shown_as: impl Into<String>) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        Ok(Artifact {
            path: shown_as.into(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Everything needed to repeat a run. Contains no timestamps or host
/// details, so repeated runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Resolved settings.
    pub config: serde_json::Value,
    /// Random streams in the order they are derived from the seed.
    pub streams: Vec<String>,
    pub inputs: Vec<Artifact>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value, streams: &[&str]) -> Self {
        Manifest {
            tool: "qsat".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            streams: streams.iter().map(|s| s.to_string()).collect(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Artifact::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Records `name`, a file already written in `out`.
    pub fn artifact(&mut self, out: &Path, name: &str) -> Result<()> {
        self.artifacts.push(Artifact::of(&out.join(name), name)?);
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
