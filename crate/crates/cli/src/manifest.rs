use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use amc_core::dataset::MANIFEST_FILE;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    /// Input path → sha256 of its bytes.
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of a file input.
pub fn digest_file(digests: &mut BTreeMap<String, String>, path: &Path) -> Result<(), Failure> {
    digests.insert(path.display().to_string(), sha256_file(path)?);
    Ok(())
}

/// Digests of the manifest and split files of a stored dataset.
pub fn digest_dataset(
    digests: &mut BTreeMap<String, String>,
    dir: &Path,
    files: &[&str],
) -> Result<(), Failure> {
    digest_file(digests, &dir.join(MANIFEST_FILE))?;
    for f in files {
        digest_file(digests, &dir.join(f))?;
    }
    Ok(())
}
