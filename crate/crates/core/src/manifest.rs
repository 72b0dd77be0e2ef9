//! Run manifests: every produced artifact is accompanied by a JSON record
//! of the effective parameters, seeds, input hashes, and output hashes, so
//! a rerun can be verified byte-for-byte.
//!
//! Manifests carry no timestamps and no execution-only knobs (parallelism
//! is deliberately excluded): identical inputs and seeds must produce an
//! identical manifest.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: &str = "webstar-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub tool_version: String,
    pub command: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub counts: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            parameters: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
        self
    }

    pub fn seed(&mut self, key: &str, value: u64) -> &mut Self {
        self.seeds.insert(key.to_string(), value);
        self
    }

    pub fn count(&mut self, key: &str, value: u64) -> &mut Self {
        self.counts.insert(key.to_string(), value);
        self
    }

    pub fn stamp_input(&mut self, path: impl AsRef<Path>) -> std::io::Result<&mut Self> {
        self.inputs.push(stamp(path)?);
        Ok(self)
    }

    pub fn stamp_output(&mut self, path: impl AsRef<Path>) -> std::io::Result<&mut Self> {
        self.outputs.push(stamp(path)?);
        Ok(self)
    }

    /// Write pretty JSON with a trailing newline.
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n")
    }
}

fn stamp(path: impl AsRef<Path>) -> std::io::Result<FileStamp> {
    let path = path.as_ref();
    Ok(FileStamp { path: path.display().to_string(), sha256: sha256_file(path)? })
}

/// `<artifact>.manifest.json` sidecar path.
pub fn manifest_path(output: impl AsRef<Path>) -> PathBuf {
    let output = output.as_ref();
    let mut name = output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.push_str(".manifest.json");
    output.with_file_name(name)
}

pub fn sha256_file(path: impl AsRef<Path>) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_digest(hasher))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_digest(hasher)
}

fn hex_digest(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
