//! Run manifests: every subcommand writes one next to its outputs with the
//! full argument snapshot, seed, inputs, outputs, and code version, so the
//! run can be reproduced exactly from the recorded arguments.

use anyhow::Result;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Full post-default argument snapshot.
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub started_at_unix: u64,
    pub finished_at_unix: u64,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started_at: u64,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now_unix(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Writes `<dest>.manifest.json` (file outputs) or `<dest>/manifest.json`
    /// (directory outputs).
    pub fn write(&self, dest: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_unix: self.started_at,
            finished_at_unix: now_unix(),
        };
        let path = if dest.is_dir() {
            dest.join("manifest.json")
        } else {
            let mut name = dest.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            dest.with_file_name(name)
        };
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
