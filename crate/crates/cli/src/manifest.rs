//! Provenance record written next to every artifact set.

use std::fs;
use std::path::{Path, PathBuf};

use mmgt_core::harness::TrainConfig;
use mmgt_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    /// Hex SHA-256 of the file, or of the sorted `name digest` listing for a
    /// directory.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub timestamp: String,
    pub command: Vec<String>,
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<String>,
    /// Fully resolved configuration.
    pub config: Option<TrainConfig>,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest of a file, or of a directory's files in name order.
pub fn digest_path(path: &Path) -> Result<InputDigest> {
    let sha256 = if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        let mut listing = String::new();
        for p in entries {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            listing.push_str(&format!("{name} {}\n", sha256_file(&p)?));
        }
        hex::encode(Sha256::digest(listing.as_bytes()))
    } else {
        sha256_file(path)?
    };
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256,
    })
}

impl RunManifest {
    pub fn new(config_file: Option<PathBuf>, overrides: Vec<String>, config: Option<TrainConfig>, inputs: &[PathBuf]) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            command: std::env::args().collect(),
            config_file,
            overrides,
            config,
            inputs: inputs.iter().map(|p| digest_path(p)).collect::<Result<_>>()?,
            artifacts: Vec::new(),
        })
    }

    /// Lists every file under `dir` (relative paths) and writes
    /// `manifest.json` there.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut m = self.clone();
        m.artifacts = list_files(dir, dir)?;
        m.artifacts.push(PathBuf::from("manifest.json"));
        m.artifacts.sort();
        let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Runtime(e.to_string()))?;
        let path = dir.join("manifest.json");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

fn list_files(root: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            out.extend(list_files(root, &path)?);
        } else if path.file_name().is_some_and(|n| n != "manifest.json") {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(out)
}
