//! TOML documents read by the `marn` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use marn_core::data::SynthTaskSpec;
use marn_core::harness::TrainConfig;
use marn_core::MarnConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
}

impl DataPaths {
    pub fn named(&self) -> [(&'static str, &Path); 3] {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
    }
}

/// Configuration for `train`, `eval`, `gradcheck` and `attn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds both parameter initialization and batch shuffling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: Option<DataPaths>,
    pub model: MarnConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Configuration for `gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub task: SynthTaskSpec,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses `path`, resolves relative paths against its directory and
    /// applies the seed override.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = read(path)?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if cfg.model.seed != 0 || cfg.train.as_ref().is_some_and(|t| t.seed != 0) {
            bail!("set the seed at the top level of {}, not under [model] or [train]", path.display());
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.model.seed = cfg.seed;
        if let Some(t) = cfg.train.as_mut() {
            t.seed = cfg.seed;
        }
        let base = base_dir(path);
        resolve(&base, &mut cfg.out_dir);
        if let Some(d) = cfg.data.as_mut() {
            resolve(&base, &mut d.train);
            resolve(&base, &mut d.validation);
            resolve(&base, &mut d.test);
        }
        cfg.model.validate().with_context(|| format!("invalid [model] in {}", path.display()))?;
        if let Some(t) = &cfg.train {
            t.validate().with_context(|| format!("invalid [train] in {}", path.display()))?;
        }
        Ok(cfg)
    }

    /// Dataset paths, each checked to exist.
    pub fn data(&self) -> Result<&DataPaths> {
        let Some(d) = &self.data else { bail!("config has no [data] section") };
        for (name, p) in d.named() {
            if !p.is_file() {
                bail!("{name} dataset not found: {}", p.display());
            }
        }
        Ok(d)
    }

    pub fn train_config(&self) -> Result<&TrainConfig> {
        self.train.as_ref().context("config has no [train] section")
    }
}

impl GenConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = read(path)?;
        let mut cfg: GenConfig = toml::from_str(&text).with_context(|| format!("invalid spec {}", path.display()))?;
        if let Some(s) = seed {
            cfg.task.seed = s;
        }
        if let Some(out) = cfg.out_dir.as_mut() {
            resolve(&base_dir(path), out);
        }
        Ok(cfg)
    }
}
