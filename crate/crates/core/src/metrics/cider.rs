//! CIDEr-D: tf-idf weighted n-gram cosine against each reference, with the
//! candidate's counts clipped by the reference counts and a gaussian length
//! penalty, averaged over references and n = 1..=4, scaled by 10.
//!
//! Term weights are raw counts times `ln N - ln max(1, df)`. The length
//! penalty is `exp(-(l_c - l_r)^2 / (2 sigma^2))` with sigma = 6.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ngram_counts, DfStats, Ngram, RefSet, MAX_NGRAM};

pub const CIDER_D_SIGMA: f64 = 6.0;

/// Which consensus score to compute. `Plain` drops clipping and the length
/// penalty but keeps the tf-idf weights and the ×10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiderVariant {
    #[default]
    CiderD,
    Plain,
}

struct TfIdf {
    vecs: [BTreeMap<Ngram, f64>; MAX_NGRAM],
    norms: [f64; MAX_NGRAM],
    len: usize,
}

impl TfIdf {
    fn new<S: AsRef<str>>(tokens: &[S], stats: &DfStats) -> Self {
        let mut vecs: [BTreeMap<Ngram, f64>; MAX_NGRAM] = Default::default();
        let mut norms = [0.0; MAX_NGRAM];
        for n in 1..=MAX_NGRAM {
            let mut sq = 0.0;
            for (g, c) in ngram_counts(tokens, n) {
                let w = c as f64 * stats.idf(&g);
                sq += w * w;
                vecs[n - 1].insert(g, w);
            }
            norms[n - 1] = sq.sqrt();
        }
        TfIdf {
            vecs,
            norms,
            len: tokens.len(),
        }
    }

    fn similarity(&self, other: &TfIdf, variant: CiderVariant) -> [f64; MAX_NGRAM] {
        let mut out = [0.0; MAX_NGRAM];
        let delta = self.len as f64 - other.len as f64;
        let penalty = match variant {
            CiderVariant::CiderD => (-(delta * delta) / (2.0 * CIDER_D_SIGMA * CIDER_D_SIGMA)).exp(),
            CiderVariant::Plain => 1.0,
        };
        #[allow(clippy::needless_range_loop)]
        for n in 0..MAX_NGRAM {
            let mut val = 0.0;
            for (g, &wc) in &self.vecs[n] {
                if let Some(&wr) = other.vecs[n].get(g) {
                    val += match variant {
                        CiderVariant::CiderD => wc.min(wr) * wr,
                        CiderVariant::Plain => wc * wr,
                    };
                }
            }
            if self.norms[n] != 0.0 && other.norms[n] != 0.0 {
                val /= self.norms[n] * other.norms[n];
            } else {
                val = 0.0;
            }
            out[n] = val * penalty;
        }
        out
    }
}

/// Consensus score of `cand` against every caption in `refs`. An empty
/// candidate scores 0.
pub fn cider<S: AsRef<str>>(cand: &[S], refs: &RefSet, stats: &DfStats, variant: CiderVariant) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let vc = TfIdf::new(cand, stats);
    let mut acc = [0.0; MAX_NGRAM];
    for r in refs.refs() {
        let vr = TfIdf::new(r, stats);
        let sim = vc.similarity(&vr, variant);
        for n in 0..MAX_NGRAM {
            acc[n] += sim[n];
        }
    }
    let k = refs.len() as f64;
    let mean: f64 = acc.iter().map(|s| s / k).sum::<f64>() / MAX_NGRAM as f64;
    10.0 * mean
}

pub fn cider_d<S: AsRef<str>>(cand: &[S], refs: &RefSet, stats: &DfStats) -> f64 {
    cider(cand, refs, stats, CiderVariant::CiderD)
}
