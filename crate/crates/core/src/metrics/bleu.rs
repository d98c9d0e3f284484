//! Sentence-level BLEU-n against multiple references.
//!
//! Precision of order m clips each candidate m-gram count by its maximum
//! count in any single reference. A zero precision (no matches, or no
//! m-grams at all in a short candidate) is floored at [`BLEU_EPSILON`]
//! before the geometric mean. The brevity penalty uses the reference
//! length closest to the candidate length, ties going to the shorter one.

use std::collections::BTreeMap;

use super::{ngram_counts, Ngram, RefSet};

pub const BLEU_EPSILON: f64 = 1e-9;

pub fn bleu_n<S: AsRef<str>>(cand: &[S], refs: &RefSet, n: usize) -> f64 {
    assert!((1..=super::MAX_NGRAM).contains(&n), "BLEU order must be in 1..=4, got {n}");
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_precision = 0.0;
    for m in 1..=n {
        let counts = ngram_counts(cand, m);
        let mut max_ref: BTreeMap<&Ngram, usize> = BTreeMap::new();
        let ref_counts: Vec<_> = refs.refs().iter().map(|r| ngram_counts(r, m)).collect();
        for rc in &ref_counts {
            for (g, &c) in rc {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let total: usize = counts.values().sum();
        let clipped: usize = counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if clipped == 0 {
            BLEU_EPSILON
        } else {
            clipped as f64 / total as f64
        };
        log_precision += p.ln();
    }
    let c = cand.len();
    let r = closest_ref_len(c, refs);
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (log_precision / n as f64).exp()
}

fn closest_ref_len(c: usize, refs: &RefSet) -> usize {
    refs.refs()
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(c), l))
        .expect("RefSet is non-empty")
}
