use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Every key the `--config` file may set. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    // gen-corpus
    pub n_images: Option<usize>,
    pub refs_per_image: Option<usize>,
    pub vocab_size: Option<usize>,
    pub n_topics: Option<usize>,
    pub idiosyncrasy: Option<f64>,
    // data
    pub min_count: Option<usize>,
    pub split: Option<String>,
    // annotate
    pub mode: Option<String>,
    pub cuts: Option<Vec<f64>>,
    pub self_inclusion: Option<bool>,
    pub cider_variant: Option<String>,
    // train
    pub method: Option<String>,
    pub center_level: Option<bool>,
    pub retain_low_reward: Option<bool>,
    pub epochs: Option<usize>,
    pub xe_epochs: Option<usize>,
    pub lr: Option<f64>,
    pub rl_lr: Option<f64>,
    pub optimizer: Option<String>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub substitution: Option<String>,
    pub xe_cuts: Option<Vec<f64>>,
    pub rl_cuts: Option<Vec<f64>>,
    pub d_model: Option<usize>,
    pub max_len: Option<usize>,
    pub workers: Option<usize>,
    pub eval_split: Option<String>,
    // eval
    pub level: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }
}

/// Command-line value, else file value, else `default`.
pub fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

pub fn parse_cuts(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| UsageError(format!("bad cut point {x:?}: {e}")).into())
        })
        .collect()
}

/// Parses a lowercase keyword through serde, so flag spellings match the
/// serialized names.
pub fn keyword<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| UsageError(format!("unknown {what} {s:?}")).into())
}
