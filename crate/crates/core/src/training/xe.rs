use super::check_finite;
use crate::metrics::Caption;
use crate::model::{teacher_forced_trace, Dropout, Gradients, ImageContext, PolicyParams, Vocab};
use crate::quality::QualityLevel;
use crate::rng::Rng;
use crate::{Error, Result};

/// A ground-truth caption with the level it is trained under.
#[derive(Debug, Clone, Copy)]
pub struct XeExample<'a> {
    pub ctx: &'a ImageContext,
    pub caption: &'a Caption,
    pub level: QualityLevel,
}

/// Mean negative log-likelihood of the batch and its gradient.
///
/// Out-of-vocabulary words are scored as `<unk>`; captions longer than the
/// model's `max_len` are truncated.
pub fn xe_gradient(
    params: &PolicyParams,
    vocab: &Vocab,
    batch: &[XeExample<'_>],
    dropout: f64,
    rng: &mut Rng,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Config("empty XE batch".into()));
    }
    let max_len = params.config().max_len;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeroed_gradients();
    let mut loss = 0.0;
    for ex in batch {
        let mut ids = vocab.encode_lossy(ex.caption);
        ids.truncate(max_len);
        let tf = teacher_forced_trace(params, ex.ctx, ex.level, &ids, Dropout::Draw { rate: dropout, rng })?;
        loss -= tf.total * scale;
        tf.trace.backward(params, &tf.targets, -scale, &mut grads);
    }
    check_finite("XE loss", loss)?;
    if !grads.all_finite() {
        return Err(Error::NumericalAbort("XE gradient has non-finite entries".into()));
    }
    Ok((loss, grads))
}
