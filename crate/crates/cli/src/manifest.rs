use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written once into every output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the resolved configuration below.
    pub config_hash: String,
    /// Resolved configuration with all defaults filled in.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub wall_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn entry(path: &Path) -> Result<FileEntry, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(FileEntry { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
}

/// Collects what a command read and wrote, then writes `manifest.json`.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> &mut Self {
        self.config = serde_json::to_value(config).expect("configuration serializes");
        self
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: PathBuf) -> &mut Self {
        self.outputs.push(path);
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<RunManifest, CliError> {
        let config_text = serde_json::to_string(&self.config).expect("configuration serializes");
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA,
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            config: self.config.clone(),
            seeds: self.seeds.clone(),
            inputs: self.inputs.iter().map(|p| entry(p)).collect::<Result<_, _>>()?,
            outputs: self.outputs.iter().map(|p| entry(p)).collect::<Result<_, _>>()?,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(out_dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
