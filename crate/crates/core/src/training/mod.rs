//! Trainers for the controllable captioner.
//!
//! - [`xe_gradient`]: teacher-forced negative log-likelihood of each
//!   ground-truth caption under its own annotated level.
//! - [`scst_gradient`]: self-critical policy gradient with the mean reward
//!   of `k` samples as baseline and no level machinery.
//! - [`sat_gradient`]: self-annotated training. Samples are relabelled with
//!   the level of their own reward and only samples at or above the
//!   baseline are optimized.
//! - [`qsat_gradient`]: the quality-oriented variant. A center level is
//!   estimated from `k` preliminary samples, below-baseline samples are
//!   kept and relabelled with the center level, and the sampling pass is
//!   reused whenever the relabelled level equals the sampling level.
//!
//! All RL trainers minimise `-(1/k) Σ (r_i - b) log p'(Y_i | I, β_i)`.
//! [`Trainer`] pairs these with an optimizer; [`run_xe_epoch`] and
//! [`run_rl_epoch`] drive whole epochs.

mod eval;
mod optim;
mod rl;
mod run;
mod xe;

use serde::{Deserialize, Serialize};

use crate::metrics::CiderVariant;
use crate::quality::{ThresholdTable, TableMode};
use crate::{Error, Result};

pub use eval::{evaluate_model, greedy_decodes, level_sweep, MetricRow};
pub use optim::{Optimizer, OptimizerKind};
pub use rl::{
    baseline, compute_center_level, draw_level, qsat_gradient, reassign_levels, rl_gradient, sat_gradient,
    scst_gradient, substitute_distributions, surrogate_loss, CenterLevel, LossPass, RlFlags, RlStep, SampleRecord,
    UpdateReport,
};
pub use run::{epoch_rng, run_rl_epoch, run_xe_epoch, EpochLog, Trainer};
pub use xe::{xe_gradient, XeExample};

/// Which trainer drives the reinforcement phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Xe,
    Scst,
    Sat,
    Qsat,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Xe => "xe",
            Method::Scst => "scst",
            Method::Sat => "sat",
            Method::Qsat => "qsat",
        }
    }

    /// Methods that condition on a quality level.
    pub fn controlled(self) -> bool {
        !matches!(self, Method::Scst)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xe" => Ok(Method::Xe),
            "scst" => Ok(Method::Scst),
            "sat" => Ok(Method::Sat),
            "qsat" => Ok(Method::Qsat),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

/// How the relabelled pass is computed when its level differs from the
/// sampling level, and whether the sampling pass is reused when it does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstitutionMode {
    /// Reuse the cached sampling pass when levels agree; otherwise a fresh
    /// teacher-forced pass with freshly drawn dropout masks.
    #[default]
    CacheReuse,
    /// Same, but the fresh pass replays the sampling pass's dropout masks.
    RecomputeSharedMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Monte-Carlo samples per image.
    pub k: usize,
    /// Epochs `[0, xe_epochs)` are cross-entropy.
    pub xe_epochs: usize,
    /// Epochs `[xe_epochs, epochs)` are reinforcement.
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate for the reinforcement epochs; `lr` when unset.
    #[serde(default)]
    pub rl_lr: Option<f64>,
    pub optimizer: OptimizerKind,
    /// Images per optimizer step.
    pub batch_size: usize,
    pub dropout: f64,
    pub enable_center_level: bool,
    pub enable_low_reward_retention: bool,
    pub substitution: SubstitutionMode,
    pub xe_table: ThresholdTable,
    pub rl_table: ThresholdTable,
    /// Keep a ground-truth caption in its own reference set when scoring
    /// it for XE annotation.
    pub self_inclusion: bool,
    pub cider_variant: CiderVariant,
    pub seed: u64,
    /// Worker threads for RL sampling and scoring.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 5,
            xe_epochs: 15,
            epochs: 23,
            lr: 0.05,
            rl_lr: Some(0.02),
            optimizer: OptimizerKind::Sgd,
            batch_size: 8,
            dropout: 0.1,
            enable_center_level: true,
            enable_low_reward_retention: true,
            substitution: SubstitutionMode::CacheReuse,
            xe_table: ThresholdTable::xe(),
            rl_table: ThresholdTable::rl(),
            self_inclusion: true,
            cider_variant: CiderVariant::CiderD,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.xe_epochs > self.epochs {
            return Err(Error::Config(format!(
                "xe_epochs {} exceeds total epochs {}",
                self.xe_epochs, self.epochs
            )));
        }
        for lr in [Some(self.lr), self.rl_lr].into_iter().flatten() {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.batch_size == 0 || self.workers == 0 {
            return Err(Error::Config("batch_size and workers must be positive".into()));
        }
        if self.xe_table.mode() != TableMode::Xe || self.rl_table.mode() != TableMode::Rl {
            return Err(Error::Config("threshold tables are swapped".into()));
        }
        if self.xe_table.n_levels() != self.rl_table.n_levels() {
            return Err(Error::Config("XE and RL tables must define the same number of levels".into()));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.rl_table.n_levels()
    }

    pub fn rl_flags(&self) -> RlFlags {
        RlFlags {
            center_level: self.enable_center_level,
            retain_low_reward: self.enable_low_reward_retention,
        }
    }
}

/// Fails with a diagnostic when a loss or gradient is not finite.
pub(crate) fn check_finite(what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalAbort(format!("{what} is {value}")))
    }
}
