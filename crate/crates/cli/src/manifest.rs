use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Checkpoint,
    Entropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    /// SHA-256 of the git blob encoding, `"blob <len>\0" + contents`.
    pub sha256: String,
}

/// Record of one invocation: enough to rerun it and check its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub seed_source: Option<SeedSource>,
    /// Worker threads of the pool the run executed in.
    pub threads: u64,
    /// Effective configuration after defaults, config file and flags.
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn git_blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> anyhow::Result<FileHash> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: git_blob_sha256(&bytes),
    })
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(command: &str, threads: Option<u64>) -> Self {
        Self {
            manifest: RunManifest {
                command: command.into(),
                argv: std::env::args().collect(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: None,
                seed_source: None,
                threads: threads.unwrap_or(rayon::current_num_threads() as u64),
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: now(),
                finished_at: String::new(),
            },
        }
    }

    pub fn seed(&mut self, seed: u64, source: SeedSource) {
        self.manifest.seed = Some(seed);
        self.manifest.seed_source = Some(source);
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> anyhow::Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.inputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> anyhow::Result<RunManifest> {
        self.manifest.finished_at = now();
        let path = dir.join(MANIFEST_FILE);
        unitary_ga::io::write_json(&path, &self.manifest)?;
        Ok(self.manifest)
    }
}
