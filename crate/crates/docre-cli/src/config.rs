//! Run configuration: TOML file merged with flag overrides, flags winning.
//! Every command writes the resolved configuration next to its outputs so a
//! run can be reproduced from the snapshot alone.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_API_KEY_ENV: &str = "DOCRE_API_KEY";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoutingConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: Option<String>,
    /// Model name used for any stage without a per-stage override.
    pub model: Option<String>,
    pub relation_model: Option<String>,
    pub head_model: Option<String>,
    pub fact_model: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Allow a keyless endpoint (locally served models).
    #[serde(default)]
    pub no_api_key: bool,
    /// Per-minute request budget across all stages.
    pub requests_per_minute: Option<u32>,
    /// Per-request timeout in seconds.
    pub timeout_secs: Option<u64>,
    /// Retries after the first attempt on transient errors.
    pub max_retries: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptsConfig {
    pub with_description: bool,
    pub strict_entities: bool,
    pub gold_relation_prior: bool,
    pub open_relations: bool,
    pub parallelism: usize,
    pub call_budget: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Record/replay cache directory used with a remote backend.
    pub cache_dir: Option<PathBuf>,
    /// Answer from gold annotations instead of a model.
    pub oracle: bool,
    /// Replay-only cache directory; a miss is an error.
    pub replay: Option<PathBuf>,
    /// Evaluate only the first N sampled documents.
    pub sample: Option<usize>,
    pub seed: u64,
}

impl Default for OptsConfig {
    fn default() -> Self {
        OptsConfig {
            with_description: false,
            strict_entities: false,
            gold_relation_prior: false,
            open_relations: false,
            parallelism: 4,
            call_budget: 512,
            temperature: 0.0,
            max_tokens: 1024,
            cache_dir: None,
            oracle: false,
            replay: None,
            sample: None,
            seed: 0,
        }
    }
}

/// Resolved configuration of an extraction run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub split: Option<String>,
    pub ontology: Option<PathBuf>,
    pub paradigm: Option<String>,
    pub stage: Option<String>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub opts: OptsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(corpus) = &self.corpus {
            if !corpus.exists() {
                bail!("corpus file {} does not exist", corpus.display());
            }
        }
        if let Some(ontology) = &self.ontology {
            if !ontology.exists() {
                bail!("ontology file {} does not exist", ontology.display());
            }
        }
        if self.opts.parallelism == 0 {
            bail!("parallelism must be >= 1");
        }
        Ok(())
    }

    /// Write the resolved configuration next to the run outputs.
    pub fn write_snapshot(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let path = out_dir.join("config_snapshot.toml");
        let text = toml::to_string_pretty(self).context("serializing config snapshot")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Overlay helpers: a flag that was passed wins over the config file.
pub fn overlay<T>(slot: &mut T, flag: Option<T>) {
    if let Some(value) = flag {
        *slot = value;
    }
}

pub fn overlay_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

pub fn overlay_bool(slot: &mut bool, flag: bool) {
    if flag {
        *slot = true;
    }
}
