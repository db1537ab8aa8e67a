//! Provenance manifests.
//!
//! Every command writes `manifest.json` into its output directory,
//! recording the tool version, resolved configuration, seed, and a SHA-256
//! digest of each input file. `--verify` re-hashes the inputs recorded in
//! an existing manifest and refuses to proceed on drift. The creation
//! timestamp is the only non-reproducible field.

use std::path::{Path, PathBuf};

use caimira_core::{CoreError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub created_unix_ms: u128,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Hash the inputs and write `<out_dir>/manifest.json`.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: &[(&str, &Path)],
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let records = inputs
        .iter()
        .map(|(role, path)| {
            Ok(InputRecord {
                role: role.to_string(),
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "caimira".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed,
        config,
        inputs: records,
        created_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| CoreError::io(&path, e))?;
    Ok(path)
}

/// If `<out_dir>/manifest.json` exists, re-hash every input it records and
/// fail on any mismatch or missing file. No manifest means nothing to
/// verify.
pub fn verify_manifest(out_dir: &Path) -> Result<()> {
    let path = out_dir.join("manifest.json");
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    for input in &manifest.inputs {
        let input_path = Path::new(&input.path);
        if !input_path.exists() {
            return Err(CoreError::Integrity(format!(
                "manifest input {} ({}) no longer exists",
                input.path, input.role
            )));
        }
        let current = sha256_file(input_path)?;
        if current != input.sha256 {
            return Err(CoreError::Integrity(format!(
                "input {} ({}) changed since the recorded run: {} != {}",
                input.path, input.role, current, input.sha256
            )));
        }
    }
    log::info!("manifest verification passed for {}", path.display());
    Ok(())
}
