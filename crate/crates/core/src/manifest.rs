//! Run manifests written next to every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub tool_version: String,
    pub timestamp: String,
}

/// RFC 3339 timestamp. Honors `SOURCE_DATE_EPOCH` so reruns can be byte-identical.
pub fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    fixed
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

/// `<output>.manifest.json`
pub fn manifest_path(output: impl AsRef<Path>) -> PathBuf {
    let mut name = output.as_ref().as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
        }
    }

    pub fn input(mut self, role: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        self.inputs.push(InputFile {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(self)
    }

    /// Writes the manifest next to `output`.
    pub fn write_for(&self, output: impl AsRef<Path>) -> Result<PathBuf> {
        let path = manifest_path(output);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
