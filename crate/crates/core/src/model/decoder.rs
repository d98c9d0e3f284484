use rand::Rng as _;

use super::params::{Gradients, ParamGroup, PolicyParams};
use super::vocab::{Vocab, BOS, EOS, PAD};
use crate::metrics::{Caption, ImageId};
use crate::quality::QualityLevel;
use crate::rng::Rng;
use crate::{Error, Result};

/// Stand-in for the visual input: one `d_model`-dimensional vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageContext {
    pub image_id: ImageId,
    pub feature: Vec<f64>,
}

/// Logits and log-probabilities over the vocabulary at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub logits: Vec<f64>,
    pub logprobs: Vec<f64>,
}

impl StepDistribution {
    pub fn probs(&self) -> Vec<f64> {
        self.logprobs.iter().map(|l| l.exp()).collect()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.logprobs)
    }
}

/// Where per-position dropout masks come from.
pub enum Dropout<'a> {
    Off,
    /// Fresh inverted-dropout masks drawn from `rng`.
    Draw { rate: f64, rng: &'a mut Rng },
    /// Masks recorded by an earlier pass, one per position.
    Replay(&'a [Option<Vec<f64>>]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Ancestral sampling from the softmax.
    Sample,
    /// Argmax at every step (temperature 0).
    Greedy,
}

/// Inverted dropout: each unit is kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`. `None` when `rate` is zero.
pub fn draw_mask(rate: f64, d: usize, rng: &mut Rng) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..d)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

/// `e_level + e_word[token] + e_pos[pos]`.
pub fn embed_input(params: &PolicyParams, token: usize, level: QualityLevel, pos: usize) -> Result<Vec<f64>> {
    let cfg = params.config();
    check_index("token", token, cfg.vocab_size)?;
    check_index("level", level.0, cfg.n_levels)?;
    check_index("position", pos, cfg.max_len)?;
    let e_level = params.row(ParamGroup::LevelEmb, level.0);
    let e_word = params.row(ParamGroup::WordEmb, token);
    let e_pos = params.row(ParamGroup::PosEmb, pos);
    Ok((0..cfg.d_model).map(|i| e_level[i] + e_word[i] + e_pos[i]).collect())
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::Index { what, index, len });
    }
    Ok(())
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    (0..rows).map(|r| dot(&w[r * cols..(r + 1) * cols], x)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// dx += W^T dy
fn matvec_t_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (d, &x) in dx.iter_mut().zip(row) {
            *d += g * x;
        }
    }
}

/// dW += dy x^T
fn outer_acc(dw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, &xi) in row.iter_mut().zip(x) {
            *d += g * xi;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Every activation of one decoding pass, kept for the backward pass and
/// for reusing the pass's log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    level: QualityLevel,
    feature: Vec<f64>,
    image: Vec<f64>,
    inputs: Vec<usize>,
    masks: Vec<Option<Vec<f64>>>,
    u: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attn: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    logprobs: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn start(params: &PolicyParams, ctx: &ImageContext, level: QualityLevel) -> Result<Self> {
        let cfg = params.config();
        check_index("level", level.0, cfg.n_levels)?;
        if ctx.feature.len() != cfg.d_model {
            return Err(Error::Config(format!(
                "image feature has {} dims, model expects {}",
                ctx.feature.len(),
                cfg.d_model
            )));
        }
        let image = matvec(params.group(ParamGroup::ImageProj), cfg.d_model, cfg.d_model, &ctx.feature);
        Ok(ForwardTrace {
            level,
            feature: ctx.feature.clone(),
            image,
            inputs: Vec::new(),
            masks: Vec::new(),
            u: Vec::new(),
            q: Vec::new(),
            k: Vec::new(),
            v: Vec::new(),
            attn: Vec::new(),
            c: Vec::new(),
            h: Vec::new(),
            z: Vec::new(),
            g: Vec::new(),
            logprobs: Vec::new(),
        })
    }

    pub fn level(&self) -> QualityLevel {
        self.level
    }

    /// Number of positions evaluated so far.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn masks(&self) -> &[Option<Vec<f64>>] {
        &self.masks
    }

    pub fn logprobs(&self, t: usize) -> &[f64] {
        &self.logprobs[t]
    }

    /// Decoder input after the image term and dropout, at position `t`.
    pub fn input_vector(&self, t: usize) -> &[f64] {
        &self.u[t]
    }

    /// Log-probability of `targets[t]` at each position.
    pub fn target_logprobs(&self, targets: &[usize]) -> Vec<f64> {
        assert_eq!(targets.len(), self.len(), "one target per position");
        targets.iter().enumerate().map(|(t, &y)| self.logprobs[t][y]).collect()
    }

    /// Feeds `token` at the next position and returns the distribution over
    /// the token that follows it.
    pub fn step(&mut self, params: &PolicyParams, token: usize, mask: Option<Vec<f64>>) -> Result<StepDistribution> {
        let cfg = params.config();
        let d = cfg.d_model;
        let t = self.len();
        if t >= cfg.max_len {
            return Err(Error::Length {
                len: t + 1,
                max: cfg.max_len,
            });
        }
        let x = embed_input(params, token, self.level, t)?;
        let mut u: Vec<f64> = x.iter().zip(&self.image).map(|(a, b)| a + b).collect();
        if let Some(m) = &mask {
            for (ui, mi) in u.iter_mut().zip(m) {
                *ui *= mi;
            }
        }
        let q = matvec(params.group(ParamGroup::Query), d, d, &u);
        let k = matvec(params.group(ParamGroup::Key), d, d, &u);
        let v = matvec(params.group(ParamGroup::Value), d, d, &u);
        self.k.push(k);
        self.v.push(v);

        let scale = 1.0 / (d as f64).sqrt();
        let scores: Vec<f64> = self.k.iter().map(|kj| dot(&q, kj) * scale).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let attn: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let mut c = vec![0.0; d];
        for (a, vj) in attn.iter().zip(&self.v) {
            for (ci, vi) in c.iter_mut().zip(vj) {
                *ci += a * vi;
            }
        }

        let wo_c = matvec(params.group(ParamGroup::AttnOut), d, d, &c);
        let h: Vec<f64> = u.iter().zip(&wo_c).map(|(a, b)| a + b).collect();
        let hd = cfg.d_hidden;
        let pre = matvec(params.group(ParamGroup::FfnIn), hd, d, &h);
        let z: Vec<f64> = pre
            .iter()
            .zip(params.group(ParamGroup::FfnInBias))
            .map(|(p, b)| (p + b).tanh())
            .collect();
        let ffn = matvec(params.group(ParamGroup::FfnOut), d, hd, &z);
        let g: Vec<f64> = h
            .iter()
            .zip(&ffn)
            .zip(params.group(ParamGroup::FfnOutBias))
            .map(|((a, b), c)| a + b + c)
            .collect();

        let vsz = cfg.vocab_size;
        let mut logits = matvec(params.group(ParamGroup::OutProj), vsz, d, &g);
        for (l, b) in logits.iter_mut().zip(params.group(ParamGroup::OutBias)) {
            *l += b;
        }
        logits[PAD] = f64::NEG_INFINITY;
        logits[BOS] = f64::NEG_INFINITY;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let logprobs: Vec<f64> = logits.iter().map(|l| l - lse).collect();

        self.inputs.push(token);
        self.masks.push(mask);
        self.u.push(u);
        self.q.push(q);
        self.attn.push(attn);
        self.c.push(c);
        self.h.push(h);
        self.z.push(z);
        self.g.push(g);
        self.logprobs.push(logprobs.clone());
        Ok(StepDistribution { logits, logprobs })
    }

    /// Accumulates `d/dθ [weight * Σ_t log p_t(targets[t])]` into `grads`.
    pub fn backward(&self, params: &PolicyParams, targets: &[usize], weight: f64, grads: &mut Gradients) {
        assert_eq!(targets.len(), self.len(), "one target per position");
        if weight == 0.0 || self.is_empty() {
            return;
        }
        let cfg = params.config();
        let (d, hd) = (cfg.d_model, cfg.d_hidden);
        let n = self.len();
        let scale = 1.0 / (d as f64).sqrt();

        let r_out = params.layout_range(ParamGroup::OutProj);
        let r_out_b = params.layout_range(ParamGroup::OutBias);
        let r_w2 = params.layout_range(ParamGroup::FfnOut);
        let r_b2 = params.layout_range(ParamGroup::FfnOutBias);
        let r_w1 = params.layout_range(ParamGroup::FfnIn);
        let r_b1 = params.layout_range(ParamGroup::FfnInBias);
        let r_wo = params.layout_range(ParamGroup::AttnOut);
        let r_wq = params.layout_range(ParamGroup::Query);
        let r_wk = params.layout_range(ParamGroup::Key);
        let r_wv = params.layout_range(ParamGroup::Value);
        let r_img = params.layout_range(ParamGroup::ImageProj);
        let r_word = params.layout_range(ParamGroup::WordEmb);
        let r_level = params.layout_range(ParamGroup::LevelEmb);
        let r_pos = params.layout_range(ParamGroup::PosEmb);

        let w_out = params.group(ParamGroup::OutProj);
        let w2 = params.group(ParamGroup::FfnOut);
        let w1 = params.group(ParamGroup::FfnIn);
        let wo = params.group(ParamGroup::AttnOut);
        let gbuf = grads.as_mut_slice();

        let mut du = vec![vec![0.0; d]; n];
        let mut dq = vec![vec![0.0; d]; n];
        let mut dk = vec![vec![0.0; d]; n];
        let mut dv = vec![vec![0.0; d]; n];

        for t in 0..n {
            // d logp[y] / d logits = onehot(y) - p
            let mut dlogits: Vec<f64> = self.logprobs[t].iter().map(|l| -weight * l.exp()).collect();
            dlogits[targets[t]] += weight;

            add_into(&mut gbuf[r_out_b.clone()], &dlogits);
            outer_acc(&mut gbuf[r_out.clone()], d, &dlogits, &self.g[t]);
            let mut dg = vec![0.0; d];
            matvec_t_acc(w_out, d, &dlogits, &mut dg);

            let mut dh = dg.clone();
            add_into(&mut gbuf[r_b2.clone()], &dg);
            outer_acc(&mut gbuf[r_w2.clone()], hd, &dg, &self.z[t]);
            let mut dz = vec![0.0; hd];
            matvec_t_acc(w2, hd, &dg, &mut dz);
            let dpre: Vec<f64> = dz.iter().zip(&self.z[t]).map(|(g, z)| g * (1.0 - z * z)).collect();
            add_into(&mut gbuf[r_b1.clone()], &dpre);
            outer_acc(&mut gbuf[r_w1.clone()], d, &dpre, &self.h[t]);
            matvec_t_acc(w1, d, &dpre, &mut dh);

            add_into(&mut du[t], &dh);
            outer_acc(&mut gbuf[r_wo.clone()], d, &dh, &self.c[t]);
            let mut dc = vec![0.0; d];
            matvec_t_acc(wo, d, &dh, &mut dc);

            let a = &self.attn[t];
            let da: Vec<f64> = (0..=t).map(|j| dot(&dc, &self.v[j])).collect();
            let mean: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
            for j in 0..=t {
                for (dvi, ci) in dv[j].iter_mut().zip(&dc) {
                    *dvi += a[j] * ci;
                }
                let ds = a[j] * (da[j] - mean) * scale;
                if ds != 0.0 {
                    for i in 0..d {
                        dq[t][i] += ds * self.k[j][i];
                        dk[j][i] += ds * self.q[t][i];
                    }
                }
            }
        }

        let mut dimage = vec![0.0; d];
        for t in 0..n {
            outer_acc(&mut gbuf[r_wq.clone()], d, &dq[t], &self.u[t]);
            outer_acc(&mut gbuf[r_wk.clone()], d, &dk[t], &self.u[t]);
            outer_acc(&mut gbuf[r_wv.clone()], d, &dv[t], &self.u[t]);
            let mut dut = du[t].clone();
            matvec_t_acc(params.group(ParamGroup::Query), d, &dq[t], &mut dut);
            matvec_t_acc(params.group(ParamGroup::Key), d, &dk[t], &mut dut);
            matvec_t_acc(params.group(ParamGroup::Value), d, &dv[t], &mut dut);
            if let Some(m) = &self.masks[t] {
                for (x, mi) in dut.iter_mut().zip(m) {
                    *x *= mi;
                }
            }
            add_into(&mut dimage, &dut);
            let y = self.inputs[t];
            add_into(&mut gbuf[r_word.start + y * d..r_word.start + (y + 1) * d], &dut);
            let b = self.level.0;
            add_into(&mut gbuf[r_level.start + b * d..r_level.start + (b + 1) * d], &dut);
            add_into(&mut gbuf[r_pos.start + t * d..r_pos.start + (t + 1) * d], &dut);
        }
        outer_acc(&mut gbuf[r_img], d, &dimage, &self.feature);
    }
}

/// Distribution over the next token after `prefix` (which must start with
/// BOS), with dropout off.
pub fn forward_step(
    params: &PolicyParams,
    ctx: &ImageContext,
    level: QualityLevel,
    prefix: &[usize],
) -> Result<StepDistribution> {
    if prefix.first() != Some(&BOS) {
        return Err(Error::ContractViolation("prefix must start with BOS".into()));
    }
    let max = params.config().max_len;
    if prefix.len() > max {
        return Err(Error::Length { len: prefix.len(), max });
    }
    let mut trace = ForwardTrace::start(params, ctx, level)?;
    let mut last = None;
    for &tok in prefix {
        last = Some(trace.step(params, tok, None)?);
    }
    Ok(last.expect("prefix is non-empty"))
}

/// One caption drawn from the policy, with the pass that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    /// Word ids, without BOS/EOS.
    pub tokens: Vec<usize>,
    /// Log-probability of each emitted token, EOS included when it was
    /// sampled (a sequence cut at `max_len` has no EOS term).
    pub step_logprobs: Vec<f64>,
    pub trace: ForwardTrace,
}

impl SampledSequence {
    pub fn total_logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }

    /// The token predicted at each position of the trace.
    pub fn targets(&self) -> Vec<usize> {
        step_plan(&self.tokens, self.trace.len()).1
    }
}

/// The token each of the first `steps` positions predicts for `target`.
pub fn step_targets(target: &[usize], steps: usize) -> Vec<usize> {
    step_plan(target, steps).1
}

/// Splits a target caption into decoder inputs and the token each position
/// must predict. EOS is not predicted when the caption fills `max_len`.
pub(crate) fn step_plan(target: &[usize], max_len: usize) -> (Vec<usize>, Vec<usize>) {
    let mut inputs = vec![BOS];
    inputs.extend_from_slice(target);
    let mut targets = target.to_vec();
    targets.push(EOS);
    let steps = (target.len() + 1).min(max_len);
    inputs.truncate(steps);
    targets.truncate(steps);
    (inputs, targets)
}

/// Draws a caption token by token until EOS, forcing EOS at `max_len`.
pub fn sample_sequence(
    params: &PolicyParams,
    ctx: &ImageContext,
    level: QualityLevel,
    mode: SampleMode,
    dropout_rate: f64,
    rng: &mut Rng,
    max_len: usize,
) -> Result<SampledSequence> {
    let cfg = params.config();
    let max_len = max_len.min(cfg.max_len);
    let mut trace = ForwardTrace::start(params, ctx, level)?;
    let mut tokens = Vec::new();
    let mut step_logprobs = Vec::new();
    let mut input = BOS;
    for _ in 0..max_len {
        let mask = draw_mask(dropout_rate, cfg.d_model, rng);
        let dist = trace.step(params, input, mask)?;
        let next = match mode {
            SampleMode::Greedy => dist.argmax(),
            SampleMode::Sample => categorical(&dist.logprobs, rng),
        };
        step_logprobs.push(dist.logprobs[next]);
        if next == EOS {
            break;
        }
        tokens.push(next);
        input = next;
    }
    Ok(SampledSequence {
        tokens,
        step_logprobs,
        trace,
    })
}

fn categorical(logprobs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = EOS;
    for (i, l) in logprobs.iter().enumerate() {
        if *l == f64::NEG_INFINITY {
            continue;
        }
        acc += l.exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Result of scoring a fixed target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherForced {
    pub step_logprobs: Vec<f64>,
    pub total: f64,
    pub trace: ForwardTrace,
    pub targets: Vec<usize>,
}

/// Scores word ids `target` under `level`, keeping the trace.
pub fn teacher_forced_trace(
    params: &PolicyParams,
    ctx: &ImageContext,
    level: QualityLevel,
    target: &[usize],
    dropout: Dropout<'_>,
) -> Result<TeacherForced> {
    let cfg = params.config();
    if target.len() > cfg.max_len {
        return Err(Error::Length {
            len: target.len(),
            max: cfg.max_len,
        });
    }
    let (inputs, targets) = step_plan(target, cfg.max_len);
    let mut trace = ForwardTrace::start(params, ctx, level)?;
    let mut dropout = dropout;
    for (t, &tok) in inputs.iter().enumerate() {
        let mask = match &mut dropout {
            Dropout::Off => None,
            Dropout::Draw { rate, rng } => draw_mask(*rate, cfg.d_model, rng),
            Dropout::Replay(masks) => masks.get(t).cloned().flatten(),
        };
        trace.step(params, tok, mask)?;
    }
    let step_logprobs = trace.target_logprobs(&targets);
    let total = step_logprobs.iter().sum();
    Ok(TeacherForced {
        step_logprobs,
        total,
        trace,
        targets,
    })
}

/// `log p(target | ctx, level)` per step and in total, dropout off.
pub fn teacher_forced_logprobs(
    params: &PolicyParams,
    vocab: &Vocab,
    ctx: &ImageContext,
    level: QualityLevel,
    target: &Caption,
) -> Result<(Vec<f64>, f64)> {
    let ids = vocab.encode(target)?;
    let tf = teacher_forced_trace(params, ctx, level, &ids, Dropout::Off)?;
    Ok((tf.step_logprobs, tf.total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use crate::rng::{stream, Stream};

    fn toy(seed: u64) -> (PolicyParams, ImageContext) {
        let cfg = ModelConfig::new(12, 8, 3, 6);
        let mut rng = stream(seed, Stream::Init);
        let p = PolicyParams::init(cfg, &mut rng).unwrap();
        let feature = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (
            p,
            ImageContext {
                image_id: "img".into(),
                feature,
            },
        )
    }

    #[test]
    fn embedding_is_additive() {
        let (p, _) = toy(1);
        let x = embed_input(&p, 5, QualityLevel(2), 3).unwrap();
        let w = p.row(ParamGroup::WordEmb, 5);
        let pos = p.row(ParamGroup::PosEmb, 3);
        let lvl = p.row(ParamGroup::LevelEmb, 2);
        for i in 0..8 {
            assert!((x[i] - w[i] - pos[i] - lvl[i]).abs() < 1e-15);
        }
        assert!(matches!(
            embed_input(&p, 12, QualityLevel(0), 0),
            Err(Error::Index { what: "token", .. })
        ));
        assert!(matches!(
            embed_input(&p, 4, QualityLevel(3), 0),
            Err(Error::Index { what: "level", .. })
        ));
        assert!(embed_input(&p, 4, QualityLevel(0), 6).is_err());
    }

    #[test]
    fn step_distribution_normalizes_and_masks() {
        let (p, ctx) = toy(2);
        let dist = forward_step(&p, &ctx, QualityLevel(1), &[BOS, 4, 7]).unwrap();
        let sum: f64 = dist.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(dist.logprobs[BOS], f64::NEG_INFINITY);
        assert_eq!(dist.logprobs[PAD], f64::NEG_INFINITY);
    }

    #[test]
    fn prefix_contract() {
        let (p, ctx) = toy(3);
        assert!(forward_step(&p, &ctx, QualityLevel(0), &[4]).is_err());
        let long = [BOS, 4, 4, 4, 4, 4, 4];
        assert!(matches!(
            forward_step(&p, &ctx, QualityLevel(0), &long),
            Err(Error::Length { .. })
        ));
    }

    #[test]
    fn sampling_respects_cap_and_replays_exactly() {
        let (p, ctx) = toy(4);
        for seed in 0..20 {
            let mut rng = stream(seed, Stream::Reinforce);
            let s = sample_sequence(&p, &ctx, QualityLevel(2), SampleMode::Sample, 0.0, &mut rng, 6).unwrap();
            assert!(s.tokens.len() <= 6);
            assert!(s.tokens.iter().all(|&t| t > EOS));
            let tf = teacher_forced_trace(&p, &ctx, QualityLevel(2), &s.tokens, Dropout::Off).unwrap();
            assert_eq!(tf.step_logprobs, s.step_logprobs);
            assert_eq!(tf.trace, s.trace);
        }
    }

    #[test]
    fn dropout_masks_replay_bit_exactly() {
        let (p, ctx) = toy(5);
        let mut rng = stream(9, Stream::Reinforce);
        let s = sample_sequence(&p, &ctx, QualityLevel(0), SampleMode::Sample, 0.3, &mut rng, 6).unwrap();
        let tf = teacher_forced_trace(&p, &ctx, QualityLevel(0), &s.tokens, Dropout::Replay(s.trace.masks())).unwrap();
        assert_eq!(tf.step_logprobs, s.step_logprobs);
    }

    #[test]
    fn greedy_matches_stepwise_argmax() {
        let (p, ctx) = toy(6);
        let mut rng = stream(0, Stream::Reinforce);
        let s = sample_sequence(&p, &ctx, QualityLevel(1), SampleMode::Greedy, 0.0, &mut rng, 6).unwrap();
        let mut prefix = vec![BOS];
        for &tok in &s.tokens {
            let dist = forward_step(&p, &ctx, QualityLevel(1), &prefix).unwrap();
            assert_eq!(dist.argmax(), tok);
            prefix.push(tok);
        }
    }

    #[test]
    fn step_plan_handles_cap() {
        assert_eq!(step_plan(&[5, 6], 4), (vec![BOS, 5, 6], vec![5, 6, EOS]));
        assert_eq!(step_plan(&[5, 6, 7, 8], 4), (vec![BOS, 5, 6, 7], vec![5, 6, 7, 8]));
        assert_eq!(step_plan(&[], 4), (vec![BOS], vec![EOS]));
    }
}
