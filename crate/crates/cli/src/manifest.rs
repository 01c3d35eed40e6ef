use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Written as `manifest.json` next to a run's outputs. Only the timestamps
/// differ between reruns of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// File names relative to the output directory, in write order.
    pub outputs: Vec<String>,
}

pub(crate) fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str, config: &ExperimentConfig) -> Self {
        Self::new(command, config.hash(), config.seed)
    }

    /// For runs driven by an input file rather than a config; `sha256` is
    /// the hash of that file.
    pub fn new(command: &str, sha256: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_sha256: sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: now_unix(),
            finished_unix: 0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<Self, CliError> {
        self.finished_unix = now_unix();
        let json = serde_json::to_string_pretty(&self).map_err(|e| CliError::Run(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(self)
    }
}
