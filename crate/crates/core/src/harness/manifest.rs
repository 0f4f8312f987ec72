//! Run manifests: what was run, with which inputs, and what it produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::RNG_ALGORITHM;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub error: Option<String>,
    pub experiment: Option<String>,
    /// The full resolved config in its flat text form.
    pub config_snapshot: String,
    pub config_hash: Option<String>,
    /// SHA-256 of the dataset CSV when the data came from a file.
    pub data_sha256: Option<String>,
    pub rng_algorithm: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at_unix_ms: u64,
    pub finished_at_unix_ms: Option<u64>,
    /// Relative to the manifest's directory.
    pub output_paths: Vec<String>,
    pub content_hashes: BTreeMap<String, String>,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn start(config: Option<&ExperimentConfig>, raw_snapshot: &str) -> Self {
        RunManifest {
            status: RunStatus::Running,
            error: None,
            experiment: config.map(|c| c.experiment.as_str().to_string()),
            config_snapshot: config
                .map(ExperimentConfig::to_text)
                .unwrap_or_else(|| raw_snapshot.to_string()),
            config_hash: config.map(ExperimentConfig::config_hash),
            data_sha256: None,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: config.map(|c| c.seed),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_unix_ms: now_unix_ms(),
            finished_at_unix_ms: None,
            output_paths: Vec::new(),
            content_hashes: BTreeMap::new(),
        }
    }

    /// Records the outputs and their digests; file names are relative to `dir`.
    pub fn record_outputs(&mut self, dir: &Path, files: &[String]) -> Result<()> {
        for name in files {
            self.content_hashes.insert(name.clone(), sha256_file(&dir.join(name))?);
        }
        self.output_paths = files.to_vec();
        Ok(())
    }

    pub fn finish(&mut self, outcome: &Result<()>) {
        self.finished_at_unix_ms = Some(now_unix_ms());
        match outcome {
            Ok(()) => self.status = RunStatus::Success,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&self.config_snapshot)
    }

    /// Rehashes every recorded output under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, expected) in &self.content_hashes {
            let path = dir.join(name);
            let found = sha256_file(&path)?;
            if &found != expected {
                return Err(Error::Integrity {
                    path,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}
