use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::eval::{level_sweep, MetricRow};
use super::optim::Optimizer;
use super::rl::{qsat_gradient, sat_gradient, scst_gradient, RlStep, UpdateReport};
use super::xe::{xe_gradient, XeExample};
use super::{check_finite, Method, TrainConfig};
use crate::data::Dataset;
use crate::metrics::{build_df_stats, DfStats, RefSet};
use crate::model::{Checkpoint, Gradients, ImageContext, ModelConfig, ParamGroup, PolicyParams, Vocab};
use crate::quality::{annotate_with_stats, AnnotateOptions, Annotation, QualityLevel};
use crate::rng::{stream, Rng, RngState, Stream};
use crate::{Error, Result};

/// Model parameters together with the optimizer state that updates them.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: PolicyParams,
    pub vocab: Vocab,
    pub cfg: TrainConfig,
    /// False for the uncontrolled baseline: its level table is zero and
    /// never updated.
    pub controlled: bool,
    /// Epochs completed.
    pub epoch: usize,
    optimizer: Optimizer,
}

impl Trainer {
    pub fn new(mut params: PolicyParams, vocab: Vocab, cfg: TrainConfig, controlled: bool) -> Result<Self> {
        cfg.validate()?;
        if params.config().vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "model has {} word rows, vocabulary has {} entries",
                params.config().vocab_size,
                vocab.len()
            )));
        }
        if params.config().n_levels != cfg.n_levels() {
            return Err(Error::Config(format!(
                "model has {} levels, threshold tables define {}",
                params.config().n_levels,
                cfg.n_levels()
            )));
        }
        if !controlled {
            params.group_mut(ParamGroup::LevelEmb).fill(0.0);
        }
        let optimizer = Optimizer::new(cfg.optimizer, cfg.lr);
        Ok(Trainer {
            params,
            vocab,
            cfg,
            controlled,
            epoch: 0,
            optimizer,
        })
    }

    /// Fresh parameters for `ds` drawn from the init stream of `cfg.seed`.
    pub fn init(ds: &Dataset, d_model: usize, max_len: usize, cfg: TrainConfig, controlled: bool) -> Result<Self> {
        let model = ModelConfig::new(ds.vocab.len(), d_model, cfg.n_levels(), max_len);
        let params = PolicyParams::init(model, &mut stream(cfg.seed, Stream::Init))?;
        Trainer::new(params, ds.vocab.clone(), cfg, controlled)
    }

    pub fn from_checkpoint(ckpt: Checkpoint, cfg: TrainConfig) -> Result<Self> {
        let mut t = Trainer::new(ckpt.params, ckpt.vocab, cfg, ckpt.controlled)?;
        t.epoch = ckpt.epoch;
        Ok(t)
    }

    pub fn checkpoint(&self, rng_state: Option<RngState>) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            vocab: self.vocab.clone(),
            controlled: self.controlled,
            epoch: self.epoch,
            rng_state,
        }
    }

    pub fn frozen(&self) -> Vec<ParamGroup> {
        if self.controlled {
            Vec::new()
        } else {
            vec![ParamGroup::LevelEmb]
        }
    }

    /// The level a ground-truth caption is trained under.
    fn train_level(&self, annotated: QualityLevel) -> QualityLevel {
        if self.controlled {
            annotated
        } else {
            QualityLevel(0)
        }
    }

    /// One optimizer step along `grads`.
    pub fn apply(&mut self, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NumericalAbort("refusing to apply a non-finite gradient".into()));
        }
        let frozen = self.frozen();
        self.optimizer.step(&mut self.params, grads, &frozen);
        if !self.params.all_finite() {
            return Err(Error::NumericalAbort("parameters became non-finite".into()));
        }
        Ok(())
    }

    /// One cross-entropy step on `batch`; returns the loss before the step.
    pub fn xe_update(&mut self, batch: &[XeExample<'_>], rng: &mut Rng) -> Result<f64> {
        let (loss, grads) = xe_gradient(&self.params, &self.vocab, batch, self.cfg.dropout, rng)?;
        self.optimizer.set_lr(self.cfg.lr);
        self.apply(&grads)?;
        Ok(loss)
    }

    fn rl_step(&self, method: Method, ctx: &ImageContext, refs: &RefSet, stats: &DfStats, rng: &mut Rng) -> Result<RlStep> {
        let (p, v, c) = (&self.params, &self.vocab, &self.cfg);
        match method {
            Method::Qsat => qsat_gradient(p, v, ctx, refs, stats, rng, c),
            Method::Sat => sat_gradient(p, v, ctx, refs, stats, rng, c),
            Method::Scst => scst_gradient(p, v, ctx, refs, stats, rng, c),
            Method::Xe => Err(Error::Config("xe is not a reinforcement method".into())),
        }
    }

    /// One RL step on a single image.
    pub fn rl_update(
        &mut self,
        method: Method,
        ctx: &ImageContext,
        refs: &RefSet,
        stats: &DfStats,
        rng: &mut Rng,
    ) -> Result<UpdateReport> {
        let step = self.rl_step(method, ctx, refs, stats, rng)?;
        self.optimizer.set_lr(self.cfg.rl_lr.unwrap_or(self.cfg.lr));
        self.apply(&step.grads)?;
        Ok(step.report)
    }

    pub fn qsat_update(&mut self, ctx: &ImageContext, refs: &RefSet, stats: &DfStats, rng: &mut Rng) -> Result<UpdateReport> {
        self.rl_update(Method::Qsat, ctx, refs, stats, rng)
    }

    pub fn sat_update(&mut self, ctx: &ImageContext, refs: &RefSet, stats: &DfStats, rng: &mut Rng) -> Result<UpdateReport> {
        self.rl_update(Method::Sat, ctx, refs, stats, rng)
    }

    pub fn scst_update(&mut self, ctx: &ImageContext, refs: &RefSet, stats: &DfStats, rng: &mut Rng) -> Result<UpdateReport> {
        self.rl_update(Method::Scst, ctx, refs, stats, rng)
    }

    /// Pairs each image of `split` with its feature.
    pub fn contexts(&self, ds: &Dataset, split: &[RefSet]) -> Vec<(ImageContext, RefSet)> {
        let d = self.params.config().d_model;
        split.iter().map(|s| (ds.context(&s.image_id, d), s.clone())).collect()
    }

    /// Per-level metrics on `split`, with document frequencies taken from
    /// `split` itself.
    pub fn evaluate(&self, ds: &Dataset, split: &[RefSet]) -> Result<Vec<MetricRow>> {
        let stats = build_df_stats(split)?;
        let images = self.contexts(ds, split);
        level_sweep(&self.params, &self.vocab, &images, &stats)
    }

    /// Runs the remaining epochs of the schedule: cross-entropy before
    /// `xe_epochs` (or throughout for [`Method::Xe`]) and `method` after.
    /// `on_epoch` sees every epoch's log line; validation metrics are
    /// filled in when `eval_split` is given.
    pub fn fit(
        &mut self,
        ds: &Dataset,
        method: Method,
        eval_split: Option<&[RefSet]>,
        mut on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<()>,
    ) -> Result<()> {
        let mut annotation = None;
        while self.epoch < self.cfg.epochs {
            let epoch = self.epoch;
            let mut log = if method == Method::Xe || epoch < self.cfg.xe_epochs {
                self.optimizer.set_lr(self.cfg.lr);
                if annotation.is_none() {
                    let opts = AnnotateOptions {
                        self_inclusion: self.cfg.self_inclusion,
                        variant: self.cfg.cider_variant,
                    };
                    annotation = Some(annotate_with_stats(&ds.train, &ds.stats, &self.cfg.xe_table, opts)?);
                }
                let mut rng = epoch_rng(self.cfg.seed, Stream::CrossEntropy, epoch);
                run_xe_epoch(self, ds, annotation.as_ref().expect("annotated above"), &mut rng)?
            } else {
                self.optimizer.set_lr(self.cfg.rl_lr.unwrap_or(self.cfg.lr));
                let mut rng = epoch_rng(self.cfg.seed, Stream::Reinforce, epoch);
                run_rl_epoch(self, method, ds, &mut rng)?
            };
            if let Some(split) = eval_split {
                log.metrics = self.evaluate(ds, split)?;
            }
            self.epoch += 1;
            on_epoch(&log, self)?;
        }
        Ok(())
    }
}

/// The generator for one epoch of one phase, independent of earlier
/// epochs so a run can resume from any checkpoint.
pub fn epoch_rng(seed: u64, which: Stream, epoch: usize) -> Rng {
    stream(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15), which)
}

/// One structured record per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// "xe" or the RL method name.
    pub phase: String,
    pub steps: usize,
    pub loss: f64,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_reassigned: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<MetricRow>,
}

/// One pass of cross-entropy over the training split in shuffled batches
/// of `batch_size` images.
pub fn run_xe_epoch(trainer: &mut Trainer, ds: &Dataset, annotation: &Annotation, rng: &mut Rng) -> Result<EpochLog> {
    let d = trainer.params.config().d_model;
    let contexts: Vec<ImageContext> = annotation.images.iter().map(|im| ds.context(&im.image_id, d)).collect();
    let mut order: Vec<usize> = (0..annotation.images.len()).collect();
    order.shuffle(rng);
    let mut loss = 0.0;
    let mut norm = 0.0;
    let mut steps = 0;
    for chunk in order.chunks(trainer.cfg.batch_size) {
        let batch: Vec<XeExample<'_>> = chunk
            .iter()
            .flat_map(|&i| {
                let ctx = &contexts[i];
                annotation.images[i].captions.iter().map(move |c| (ctx, c))
            })
            .map(|(ctx, c)| XeExample {
                ctx,
                caption: &c.caption,
                level: trainer.train_level(c.level),
            })
            .collect();
        let (l, grads) = xe_gradient(&trainer.params, &trainer.vocab, &batch, trainer.cfg.dropout, rng)?;
        trainer.apply(&grads)?;
        loss += l;
        norm += grads.norm();
        steps += 1;
    }
    let n = steps.max(1) as f64;
    check_finite("epoch loss", loss)?;
    Ok(EpochLog {
        epoch: trainer.epoch,
        phase: Method::Xe.name().into(),
        steps,
        loss: loss / n,
        grad_norm: norm / n,
        mean_reward: None,
        n_reassigned: None,
        metrics: Vec::new(),
    })
}

/// One pass of `method` over the training split. Gradients of the images
/// in a batch are averaged before a single step. Each image draws from its
/// own generator seeded from `rng`, so results do not depend on
/// `cfg.workers`.
pub fn run_rl_epoch(trainer: &mut Trainer, method: Method, ds: &Dataset, rng: &mut Rng) -> Result<EpochLog> {
    let images = trainer.contexts(ds, &ds.train);
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(rng);
    let mut loss = 0.0;
    let mut norm = 0.0;
    let mut reward = 0.0;
    let mut reassigned = 0;
    let mut steps = 0;
    for chunk in order.chunks(trainer.cfg.batch_size) {
        let jobs: Vec<(usize, u64)> = chunk.iter().map(|&i| (i, rng.gen())).collect();
        let results = run_jobs(trainer, method, ds, &images, &jobs)?;
        let mut grads = trainer.params.zeroed_gradients();
        let mut batch_loss = 0.0;
        for step in &results {
            grads.add_assign(&step.grads);
            batch_loss += step.report.loss;
            reward += step.report.mean_reward;
            reassigned += step.report.n_reassigned;
        }
        let scale = 1.0 / results.len() as f64;
        grads.scale(scale);
        trainer.apply(&grads)?;
        loss += batch_loss * scale;
        norm += grads.norm();
        steps += 1;
    }
    let n = steps.max(1) as f64;
    check_finite("epoch loss", loss)?;
    Ok(EpochLog {
        epoch: trainer.epoch,
        phase: method.name().into(),
        steps,
        loss: loss / n,
        grad_norm: norm / n,
        mean_reward: Some(reward / images.len().max(1) as f64),
        n_reassigned: Some(reassigned),
        metrics: Vec::new(),
    })
}

fn run_jobs(
    trainer: &Trainer,
    method: Method,
    ds: &Dataset,
    images: &[(ImageContext, RefSet)],
    jobs: &[(usize, u64)],
) -> Result<Vec<RlStep>> {
    let one = |&(i, seed): &(usize, u64)| {
        let (ctx, refs) = &images[i];
        trainer.rl_step(method, ctx, refs, &ds.stats, &mut Rng::seed_from_u64(seed))
    };
    let workers = trainer.cfg.workers.min(jobs.len()).max(1);
    if workers == 1 {
        return jobs.iter().map(one).collect();
    }
    let per = jobs.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(per)
            .map(|part| s.spawn(move || part.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(jobs.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}
