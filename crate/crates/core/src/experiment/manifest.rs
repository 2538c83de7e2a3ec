//! Run manifests: enough to re-run a subcommand and check its outputs.

use super::config::ExperimentConfig;
use super::{ExperimentError, Result};
use crate::rng::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_VERSION: u32 = 1;

/// No timestamps or thread counts, so reruns produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    /// Subcommand arguments other than the output directory.
    pub args: serde_json::Value,
    pub seed: u64,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    /// Input path as given → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// File name inside the output directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ExperimentError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(subcommand: &str, cfg: &ExperimentConfig) -> Self {
        Manifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: subcommand.to_owned(),
            args: serde_json::Value::Null,
            seed: cfg.seed,
            config_sha256: cfg.sha256(),
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = file_sha256(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let hash = file_sha256(dir.join(name))?;
        self.outputs.insert(name.to_owned(), hash);
        Ok(())
    }

    /// Checks that the recorded inputs still hash the same.
    pub fn verify_inputs(&self) -> Result<()> {
        for (path, want) in &self.inputs {
            let got = file_sha256(path)?;
            if &got != want {
                return Err(ExperimentError::Manifest(format!(
                    "input {path} changed: recorded {want}, found {got}"
                )));
            }
        }
        Ok(())
    }

    /// Output names whose hash in `dir` differs from the recorded one.
    pub fn mismatched_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|(name, want)| file_sha256(dir.join(name)).ok().as_ref() != Some(*want))
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| ExperimentError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(ExperimentError::Manifest(format!(
                "unsupported manifest version {}",
                m.manifest_version
            )));
        }
        m.config.validate()?;
        if m.config.sha256() != m.config_sha256 {
            return Err(ExperimentError::Manifest("embedded config does not match its hash".into()));
        }
        Ok(m)
    }
}
