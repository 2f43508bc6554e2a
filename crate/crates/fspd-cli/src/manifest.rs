//! Run manifests: the resolved config, its hash, and checksums of every
//! output file. Deterministic byte-for-byte for identical runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: Value,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects checksums for `outputs` (paths relative to `dir`) and writes
/// `manifest.json` alongside them.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &Value,
    outputs: &[PathBuf],
) -> CliResult<()> {
    let config_text = serde_json::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
    let mut entries = Vec::with_capacity(outputs.len());
    for rel in outputs {
        let full = dir.join(rel);
        let bytes =
            std::fs::read(&full).map_err(|e| CliError::io(&full.display().to_string(), e))?;
        entries.push(OutputEntry {
            path: rel.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: "fspd".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        config: config.clone(),
        outputs: entries,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(())
}
