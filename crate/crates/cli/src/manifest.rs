//! Run manifest: hashes of the config and every produced file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use starklock_core::config::Config;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub tool_version: String,
    /// SHA-256 of the canonical (re-serialized) config.
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn build(scenario: &str, cfg: &Config, seed: u64, out: &Path, files: &[PathBuf]) -> anyhow::Result<Self> {
        let canonical = cfg.to_json_string()?;
        let mut entries = Vec::with_capacity(files.len());
        for f in files {
            let bytes = std::fs::read(f).with_context(|| format!("hashing {}", f.display()))?;
            let rel = f.strip_prefix(out).unwrap_or(f);
            entries.push(FileEntry { path: rel.to_string_lossy().replace('\\', "/"), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            scenario: scenario.to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            files: entries,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
