use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use interfere_core::augment::AugmentConfig;
use interfere_core::gateway::{HttpConfig, RetryPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Settings read from `--config`. Every key is optional; command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub split: Option<String>,
    pub flavor: Option<String>,
    pub corpus: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub backend: Option<String>,
    pub concurrency: Option<usize>,
    pub predictions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub port: Option<u16>,
    pub sample: Option<usize>,
    pub augment: Option<AugmentConfig>,
    pub retry: Option<RetryPolicy>,
    pub http: Option<HttpConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.corpus,
            &mut cfg.baseline,
            &mut cfg.db,
            &mut cfg.templates,
            &mut cfg.predictions,
            &mut cfg.annotations,
            &mut cfg.tasks,
            &mut cfg.results,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(backend) = &mut cfg.backend {
            if let Some(file) = backend.strip_prefix("mock:") {
                let file = Path::new(file);
                if file.is_relative() {
                    *backend = format!("mock:{}", base.join(file).display());
                }
            }
        }
        Ok(cfg)
    }
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of `effective`.
pub fn config_hash<T: Serialize>(effective: &T) -> String {
    let value = serde_json::to_value(effective).expect("effective config serializes");
    let digest = Sha256::digest(value.to_string().as_bytes());
    hex::encode(&digest[..8])
}

pub fn require(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let path = flag
        .or_else(|| config.clone())
        .with_context(|| format!("--{name} is required (or set `{name}` in the config file)"))?;
    if !path.exists() {
        anyhow::bail!("--{name}: {} does not exist", path.display());
    }
    Ok(path)
}

pub fn optional(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<Option<PathBuf>> {
    match flag.or_else(|| config.clone()) {
        Some(p) if !p.exists() => anyhow::bail!("--{name}: {} does not exist", p.display()),
        other => Ok(other),
    }
}
