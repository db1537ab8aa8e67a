//! Layered run configuration: command-line flags override environment
//! variables, which override the optional TOML config file.

use std::path::{Path, PathBuf};

use caimira_core::{CoreError, Result};
use serde::Deserialize;

pub const ENV_EMBED_URL: &str = "CAIMIRA_EMBED_URL";
pub const ENV_THREADS: &str = "CAIMIRA_THREADS";

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub paths: PathsSection,
    pub train: TrainSection,
    #[serde(rename = "match")]
    pub matching: MatchSection,
    pub groups: GroupsSection,
    pub cluster: ClusterSection,
    pub interpret: InterpretSection,
    pub embed: EmbedSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub bank: Option<PathBuf>,
    pub logs: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub m: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_d: Option<f64>,
    pub lambda_s: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub validation_fraction: Option<f64>,
    pub early_stop_patience: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    pub threshold: Option<f64>,
    pub lowercase: Option<bool>,
    pub strip_punct: Option<bool>,
    pub strip_diacritics: Option<bool>,
    pub strip_articles: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupsSection {
    pub sizes: Option<Vec<usize>>,
    pub groups_per_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretSection {
    pub threshold: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub url: Option<String>,
    pub batch_size: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CoreError::io(p, e))?;
                toml::from_str(&text)
                    .map_err(|e| CoreError::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

pub fn env_threads() -> Option<usize> {
    std::env::var(ENV_THREADS).ok().and_then(|v| v.parse().ok())
}

pub fn env_embed_url() -> Option<String> {
    std::env::var(ENV_EMBED_URL).ok()
}

/// Every referenced input path must exist before any work begins.
pub fn require_files(paths: &[(&str, &Path)]) -> Result<()> {
    for (role, path) in paths {
        if !path.exists() {
            return Err(CoreError::Config(format!(
                "{role} file not found: {}",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Embedding stores and checkpoints are `<base>.json` + `<base>.bin`
/// pairs; validate both halves up front.
pub fn require_pair(role: &str, base: &Path) -> Result<()> {
    for ext in ["json", "bin"] {
        let path = base.with_extension(ext);
        if !path.exists() {
            return Err(CoreError::Config(format!(
                "{role} file not found: {}",
                path.display()
            )));
        }
    }
    Ok(())
}
