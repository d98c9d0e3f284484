use rand::Rng as _;

use super::{check_finite, SubstitutionMode, TrainConfig};
use crate::metrics::{cider, DfStats, RefSet, Token};
use crate::model::{
    sample_sequence, teacher_forced_trace, Dropout, ForwardTrace, Gradients, ImageContext, PolicyParams, SampleMode,
    TeacherForced, Vocab,
};
use crate::quality::{assign_level, QualityLevel};
use crate::rng::Rng;
use crate::{Error, Result};

/// One Monte-Carlo sample of an RL step.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Decoded words. May be empty when EOS was drawn first.
    pub sequence: Vec<Token>,
    pub ids: Vec<usize>,
    /// Log-probability of each emitted token in the sampling pass.
    pub step_logprobs: Vec<f64>,
    pub reward: f64,
    /// Level the sample was drawn under.
    pub beta_init: QualityLevel,
    /// Level of the sample's own reward.
    pub beta_s: QualityLevel,
    /// Level the sample is optimized under.
    pub beta_ns: QualityLevel,
    /// Whether the sample enters the loss.
    pub included: bool,
    /// The sampling pass, kept so its distributions can be reused.
    pub cache: Option<ForwardTrace>,
}

impl SampleRecord {
    pub fn total_logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Mean of the `k` rewards.
    pub baseline: f64,
    pub mean_reward: f64,
    pub grad_norm: f64,
    /// Samples whose optimized level differs from their reward level.
    pub n_reassigned: usize,
    pub n_included: usize,
    pub beta_avg: QualityLevel,
    pub rewards: Vec<f64>,
    pub loss: f64,
}

/// Both ablation switches of the quality-oriented trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RlFlags {
    pub center_level: bool,
    pub retain_low_reward: bool,
}

impl RlFlags {
    pub const SAT: RlFlags = RlFlags {
        center_level: false,
        retain_low_reward: false,
    };
    pub const QSAT: RlFlags = RlFlags {
        center_level: true,
        retain_low_reward: true,
    };
}

/// Everything one image contributes to an RL update.
#[derive(Debug, Clone)]
pub struct RlStep {
    pub report: UpdateReport,
    pub records: Vec<SampleRecord>,
    pub grads: Gradients,
    pub center: Option<CenterLevel>,
}

#[derive(Debug, Clone)]
pub struct CenterLevel {
    pub beta_avg: QualityLevel,
    /// Mean reward of the preliminary samples; `None` when no samples were
    /// needed (random fallback or a single level).
    pub s_avg: Option<f64>,
    /// The preliminary samples and the levels they were drawn at.
    pub discarded: Vec<(QualityLevel, Vec<Token>, f64)>,
}

/// Uniform level in `[0, n_levels)`. Consumes nothing when there is only
/// one level.
pub fn draw_level(rng: &mut Rng, n_levels: usize) -> QualityLevel {
    if n_levels <= 1 {
        QualityLevel(0)
    } else {
        QualityLevel(rng.gen_range(0..n_levels))
    }
}

/// Mean of `rewards`, returning the common value exactly when all rewards
/// are bitwise equal.
pub fn baseline(rewards: &[f64]) -> f64 {
    assert!(!rewards.is_empty(), "baseline of no rewards");
    let first = rewards[0];
    if rewards.iter().all(|r| r.to_bits() == first.to_bits()) {
        return first;
    }
    rewards.iter().sum::<f64>() / rewards.len() as f64
}

fn reward(cand: &[Token], refs: &RefSet, stats: &DfStats, cfg: &TrainConfig) -> f64 {
    if cand.is_empty() {
        0.0
    } else {
        cider(cand, refs, stats, cfg.cider_variant)
    }
}

/// Estimates the level the image's samples should be drawn at: `k` captions
/// at random levels, scored against `refs`, with the level of their mean
/// reward. With the switch off the level is drawn uniformly instead.
#[allow(clippy::too_many_arguments)]
pub fn compute_center_level(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    refs: &RefSet,
    stats: &DfStats,
    rng: &mut Rng,
    cfg: &TrainConfig,
    enabled: bool,
) -> Result<CenterLevel> {
    let n_levels = params.config().n_levels;
    if !enabled || n_levels == 1 {
        return Ok(CenterLevel {
            beta_avg: draw_level(rng, n_levels),
            s_avg: None,
            discarded: Vec::new(),
        });
    }
    let max_len = params.config().max_len;
    let mut discarded = Vec::with_capacity(cfg.k);
    let mut total = 0.0;
    for _ in 0..cfg.k {
        let beta = draw_level(rng, n_levels);
        let s = sample_sequence(params, ctx, beta, SampleMode::Sample, cfg.dropout, rng, max_len)?;
        let words = vocab.decode(&s.tokens);
        let r = reward(&words, refs, stats, cfg);
        total += r;
        discarded.push((beta, words, r));
    }
    let s_avg = total / cfg.k as f64;
    Ok(CenterLevel {
        beta_avg: assign_level(s_avg, &cfg.rl_table),
        s_avg: Some(s_avg),
        discarded,
    })
}

/// Keeps each sample's reward level when it reached the baseline, otherwise
/// moves it to the center level.
pub fn reassign_levels(records: &mut [SampleRecord], b: f64, beta_avg: QualityLevel) {
    for r in records {
        r.beta_ns = if r.reward >= b { r.beta_s } else { beta_avg };
    }
}

/// The pass whose log-probabilities enter the loss for one sample.
#[derive(Debug, Clone, Copy)]
pub enum LossPass<'a> {
    Cached { logprobs: &'a [f64], trace: &'a ForwardTrace },
    Fresh(&'a TeacherForced),
}

impl<'a> LossPass<'a> {
    pub fn logprobs(&self) -> &'a [f64] {
        match self {
            LossPass::Cached { logprobs, .. } => logprobs,
            LossPass::Fresh(tf) => &tf.step_logprobs,
        }
    }

    pub fn trace(&self) -> &'a ForwardTrace {
        match self {
            LossPass::Cached { trace, .. } => trace,
            LossPass::Fresh(tf) => &tf.trace,
        }
    }

    pub fn is_cached(&self) -> bool {
        matches!(self, LossPass::Cached { .. })
    }
}

/// The sampling pass when the sample keeps the level it was drawn at,
/// otherwise `second_pass`, which must be a pass at `beta_ns`.
pub fn substitute_distributions<'a>(
    record: &'a SampleRecord,
    beta_avg: QualityLevel,
    second_pass: Option<&'a TeacherForced>,
) -> Result<LossPass<'a>> {
    if record.beta_init != beta_avg {
        return Err(Error::ContractViolation(format!(
            "sample drawn at level {} but center level is {}",
            record.beta_init, beta_avg
        )));
    }
    if record.beta_ns == beta_avg {
        let trace = record
            .cache
            .as_ref()
            .ok_or_else(|| Error::ContractViolation("sampling pass was not cached".into()))?;
        return Ok(LossPass::Cached {
            logprobs: &record.step_logprobs,
            trace,
        });
    }
    let tf = second_pass
        .ok_or_else(|| Error::ContractViolation(format!("no pass at level {} was supplied", record.beta_ns)))?;
    if tf.trace.level() != record.beta_ns {
        return Err(Error::ContractViolation(format!(
            "second pass is at level {}, expected {}",
            tf.trace.level(),
            record.beta_ns
        )));
    }
    Ok(LossPass::Fresh(tf))
}

#[allow(clippy::too_many_arguments)]
fn draw_samples(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    refs: &RefSet,
    stats: &DfStats,
    rng: &mut Rng,
    cfg: &TrainConfig,
    level: QualityLevel,
    label: impl Fn(f64) -> QualityLevel,
) -> Result<Vec<SampleRecord>> {
    let max_len = params.config().max_len;
    (0..cfg.k)
        .map(|_| {
            let s = sample_sequence(params, ctx, level, SampleMode::Sample, cfg.dropout, rng, max_len)?;
            let sequence = vocab.decode(&s.tokens);
            let r = reward(&sequence, refs, stats, cfg);
            let beta_s = label(r);
            Ok(SampleRecord {
                sequence,
                ids: s.tokens,
                step_logprobs: s.step_logprobs,
                reward: r,
                beta_init: level,
                beta_s,
                beta_ns: beta_s,
                included: true,
                cache: Some(s.trace),
            })
        })
        .collect()
}

/// Accumulates `-(1/k) Σ (r - b) log p'` over the included records.
fn policy_gradient(
    params: &PolicyParams,
    ctx: &ImageContext,
    records: &[SampleRecord],
    b: f64,
    beta_avg: QualityLevel,
    rng: &mut Rng,
    cfg: &TrainConfig,
) -> Result<(f64, Gradients)> {
    let k = records.len() as f64;
    let mut grads = params.zeroed_gradients();
    let mut loss = 0.0;
    for rec in records.iter().filter(|r| r.included) {
        let second = if rec.beta_ns == beta_avg {
            None
        } else {
            let dropout = match cfg.substitution {
                SubstitutionMode::CacheReuse => Dropout::Draw { rate: cfg.dropout, rng: &mut *rng },
                SubstitutionMode::RecomputeSharedMask => {
                    let cache = rec
                        .cache
                        .as_ref()
                        .ok_or_else(|| Error::ContractViolation("sampling pass was not cached".into()))?;
                    Dropout::Replay(cache.masks())
                }
            };
            Some(teacher_forced_trace(params, ctx, rec.beta_ns, &rec.ids, dropout)?)
        };
        let pass = substitute_distributions(rec, beta_avg, second.as_ref())?;
        let weight = -(rec.reward - b) / k;
        let targets = crate::model::step_targets(&rec.ids, pass.trace().len());
        pass.trace().backward(params, &targets, weight, &mut grads);
        loss += weight * pass.logprobs().iter().sum::<f64>();
    }
    check_finite("policy loss", loss)?;
    if !grads.all_finite() {
        return Err(Error::NumericalAbort("policy gradient has non-finite entries".into()));
    }
    Ok((loss, grads))
}

fn finish(
    records: Vec<SampleRecord>,
    b: f64,
    beta_avg: QualityLevel,
    loss: f64,
    grads: Gradients,
    center: Option<CenterLevel>,
) -> RlStep {
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let report = UpdateReport {
        baseline: b,
        mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        grad_norm: grads.norm(),
        n_reassigned: records.iter().filter(|r| r.included && r.beta_ns != r.beta_s).count(),
        n_included: records.iter().filter(|r| r.included).count(),
        beta_avg,
        rewards,
        loss,
    };
    RlStep {
        report,
        records,
        grads,
        center,
    }
}

/// The self-annotated trainer with both ablation switches exposed.
///
/// With `center_level` off the sampling level is one uniform draw per
/// image. With `retain_low_reward` off, samples below the baseline are
/// dropped and the rest are optimized at their reward level; with it on,
/// every sample is optimized and the low ones are moved to the sampling
/// level.
#[allow(clippy::too_many_arguments)]
pub fn rl_gradient(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    refs: &RefSet,
    stats: &DfStats,
    rng: &mut Rng,
    cfg: &TrainConfig,
    flags: RlFlags,
) -> Result<RlStep> {
    if cfg.rl_table.n_levels() != params.config().n_levels {
        return Err(Error::Config(format!(
            "RL table has {} levels, model has {}",
            cfg.rl_table.n_levels(),
            params.config().n_levels
        )));
    }
    let center = compute_center_level(params, vocab, ctx, refs, stats, rng, cfg, flags.center_level)?;
    let beta_avg = center.beta_avg;
    let mut records = draw_samples(params, vocab, ctx, refs, stats, rng, cfg, beta_avg, |r| {
        assign_level(r, &cfg.rl_table)
    })?;
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let b = baseline(&rewards);
    if flags.retain_low_reward {
        reassign_levels(&mut records, b, beta_avg);
    } else {
        for r in &mut records {
            r.included = r.reward >= b;
        }
    }
    let (loss, grads) = policy_gradient(params, ctx, &records, b, beta_avg, rng, cfg)?;
    Ok(finish(records, b, beta_avg, loss, grads, Some(center)))
}

#[allow(clippy::too_many_arguments)]
pub fn qsat_gradient(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    refs: &RefSet,
    stats: &DfStats,
    rng: &mut Rng,
    cfg: &TrainConfig,
) -> Result<RlStep> {
    rl_gradient(params, vocab, ctx, refs, stats, rng, cfg, cfg.rl_flags())
}

#[allow(clippy::too_many_arguments)]
pub fn sat_gradient(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    refs: &RefSet,
    stats: &DfStats,
    rng: &mut Rng,
    cfg: &TrainConfig,
) -> Result<RlStep> {
    rl_gradient(params, vocab, ctx, refs, stats, rng, cfg, RlFlags::SAT)
}

/// Self-critical gradient for the uncontrolled model: every sample is drawn
/// and optimized at level 0.
#[allow(clippy::too_many_arguments)]
pub fn scst_gradient(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    refs: &RefSet,
    stats: &DfStats,
    rng: &mut Rng,
    cfg: &TrainConfig,
) -> Result<RlStep> {
    let level = QualityLevel(0);
    let records = draw_samples(params, vocab, ctx, refs, stats, rng, cfg, level, |_| level)?;
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let b = baseline(&rewards);
    let (loss, grads) = policy_gradient(params, ctx, &records, b, level, rng, cfg)?;
    Ok(finish(records, b, level, loss, grads, None))
}

/// Re-evaluates the loss of a finished step at `params` with dropout off,
/// holding samples, rewards and levels fixed.
pub fn surrogate_loss(params: &PolicyParams, ctx: &ImageContext, step: &RlStep) -> Result<f64> {
    let k = step.records.len() as f64;
    let b = step.report.baseline;
    let mut loss = 0.0;
    for rec in step.records.iter().filter(|r| r.included) {
        let tf = teacher_forced_trace(params, ctx, rec.beta_ns, &rec.ids, Dropout::Off)?;
        loss += -(rec.reward - b) / k * tf.total;
    }
    Ok(loss)
}
