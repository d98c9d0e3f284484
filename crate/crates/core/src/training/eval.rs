use std::fmt::Write as _;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::metrics::{bleu_n, cider, DfStats, RefSet, Token};
use crate::metrics::{rouge_l, CiderVariant};
use crate::model::{sample_sequence, ImageContext, PolicyParams, SampleMode, Vocab};
use crate::quality::QualityLevel;
use crate::rng::Rng;
use crate::Result;

/// Corpus means of the generation metrics at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub level: usize,
    pub n_images: usize,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

impl MetricRow {
    /// Aligned text table, one row per level.
    pub fn table(rows: &[MetricRow]) -> String {
        let mut out = format!(
            "{:>5} {:>7} {:>8} {:>8} {:>8} {:>8}\n",
            "level", "images", "BLEU-1", "BLEU-4", "ROUGE-L", "CIDEr-D"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:>5} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                r.level, r.n_images, r.bleu1, r.bleu4, r.rouge_l, r.cider
            );
        }
        out
    }
}

/// Greedy decodes at `level`, dropout off.
pub fn greedy_decodes(
    params: &PolicyParams,
    vocab: &Vocab,
    contexts: &[ImageContext],
    level: QualityLevel,
) -> Result<Vec<Vec<Token>>> {
    // Greedy decoding with dropout off never touches the generator.
    let mut rng = Rng::seed_from_u64(0);
    let max_len = params.config().max_len;
    contexts
        .iter()
        .map(|ctx| {
            let s = sample_sequence(params, ctx, level, SampleMode::Greedy, 0.0, &mut rng, max_len)?;
            Ok(vocab.decode(&s.tokens))
        })
        .collect()
}

/// Greedy decoding at a fixed level scored against every reference of each
/// image.
pub fn evaluate_model(
    params: &PolicyParams,
    vocab: &Vocab,
    images: &[(ImageContext, RefSet)],
    level: QualityLevel,
    stats: &DfStats,
) -> Result<MetricRow> {
    let contexts: Vec<ImageContext> = images.iter().map(|(c, _)| c.clone()).collect();
    let decodes = greedy_decodes(params, vocab, &contexts, level)?;
    let n = images.len().max(1) as f64;
    let mut row = MetricRow {
        level: level.0,
        n_images: images.len(),
        bleu1: 0.0,
        bleu4: 0.0,
        rouge_l: 0.0,
        cider: 0.0,
    };
    for (cand, (_, refs)) in decodes.iter().zip(images) {
        row.bleu1 += bleu_n(cand, refs, 1) / n;
        row.bleu4 += bleu_n(cand, refs, 4) / n;
        row.rouge_l += rouge_l(cand, refs) / n;
        if !cand.is_empty() {
            row.cider += cider(cand, refs, stats, CiderVariant::CiderD) / n;
        }
    }
    Ok(row)
}

/// One row per level in `[0, n_levels)`.
pub fn level_sweep(
    params: &PolicyParams,
    vocab: &Vocab,
    images: &[(ImageContext, RefSet)],
    stats: &DfStats,
) -> Result<Vec<MetricRow>> {
    (0..params.config().n_levels)
        .map(|l| evaluate_model(params, vocab, images, QualityLevel(l), stats))
        .collect()
}
