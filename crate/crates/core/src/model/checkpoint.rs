//! Checkpoint files: one JSON document holding a versioned header (model
//! config, vocabulary, parameter shapes, rng position) followed by each
//! parameter group as a flat row-major array. Floats are written in
//! shortest round-trip form and parsed exactly, so `load(save(p)) == p`
//! bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ParamGroup, PolicyParams};
use super::vocab::Vocab;
use crate::rng::RngState;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "qsat-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub vocab: Vocab,
    /// False for the uncontrolled baseline whose level table stays zero.
    pub controlled: bool,
    /// Epochs completed so far.
    pub epoch: usize,
    pub rng_state: Option<RngState>,
}

#[derive(Serialize, Deserialize)]
struct GroupRecord {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    controlled: bool,
    epoch: usize,
    rng_state: Option<RngState>,
    vocab: Vocab,
    params: Vec<GroupRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let cfg = self.params.config();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            controlled: self.controlled,
            epoch: self.epoch,
            rng_state: self.rng_state.clone(),
            vocab: self.vocab.clone(),
            params: ParamGroup::ALL
                .iter()
                .map(|&g| {
                    let (r, c) = g.shape(cfg);
                    GroupRecord {
                        name: g.name().into(),
                        shape: [r, c],
                        values: self.params.group(g).to_vec(),
                    }
                })
                .collect(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: format {:?}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", file.version)));
        }
        if file.vocab.len() != file.config.vocab_size {
            return Err(Error::Format(format!(
                "vocabulary has {} entries, config says {}",
                file.vocab.len(),
                file.config.vocab_size
            )));
        }
        let mut groups = Vec::with_capacity(file.params.len());
        for rec in file.params {
            let g = ParamGroup::from_name(&rec.name)
                .ok_or_else(|| Error::Format(format!("unknown parameter group {:?}", rec.name)))?;
            let (r, c) = g.shape(&file.config);
            if rec.shape != [r, c] {
                return Err(Error::Format(format!(
                    "group {} has shape {:?}, config implies {:?}",
                    rec.name,
                    rec.shape,
                    [r, c]
                )));
            }
            groups.push((g, rec.values));
        }
        let params = PolicyParams::from_groups(file.config, &groups)?;
        if !params.all_finite() {
            return Err(Error::Format("checkpoint contains non-finite parameters".into()));
        }
        Ok(Checkpoint {
            params,
            vocab: file.vocab,
            controlled: file.controlled,
            epoch: file.epoch,
            rng_state: file.rng_state,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}
