//! Content digests of everything under an output root.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "MANIFEST.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_digest: String,
    /// Relative path (forward slashes) to hex sha256 of the file content.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds of the most recent run of each command.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config_digest: impl Into<String>) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest.into(),
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of every regular file below `root`, except the manifest itself.
pub fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("walked from root");
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if key == MANIFEST_FILE {
                continue;
            }
            out.insert(key, file_digest(&path)?);
        }
    }
    Ok(out)
}

/// Rescans `root` and records the timing of `command` in its manifest,
/// keeping timings of other commands when the config is unchanged.
pub fn update_manifest(root: &Path, config_digest: &str, command: &str, seconds: f64) -> Result<RunManifest> {
    let path = root.join(MANIFEST_FILE);
    let mut manifest = match RunManifest::read(&path) {
        Ok(m) if m.config_digest == config_digest => m,
        _ => RunManifest::new(config_digest),
    };
    manifest.version = env!("CARGO_PKG_VERSION").to_string();
    manifest.artifacts = digest_tree(root)?;
    manifest.timings.insert(command.to_string(), seconds);
    manifest.write(&path)?;
    Ok(manifest)
}
