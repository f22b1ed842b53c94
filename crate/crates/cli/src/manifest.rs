use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use splatpg::trainer::{TrainConfig, SCENE_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: &str = "splatpg-run-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifacts {
    pub scene: PathBuf,
    pub metrics: PathBuf,
    pub snapshot_dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub artifacts: Artifacts,
}

impl RunManifest {
    pub fn new(config: &TrainConfig, out_dir: &Path) -> Self {
        RunManifest {
            version: MANIFEST_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            artifacts: Artifacts {
                scene: out_dir.join(SCENE_FILE),
                metrics: out_dir.join(&config.metrics_file),
                snapshot_dir: out_dir.to_path_buf(),
            },
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).context("serializing run manifest")?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
