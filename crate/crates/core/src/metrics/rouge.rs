//! ROUGE-L: LCS-based F-measure, best over references.
//!
//! `F = (1 + b2) P R / (R + b2 P)` with `b2 = 1.2`, where `P = lcs / |cand|`
//! and `R = lcs / |ref|`.

use super::RefSet;

pub const ROUGE_BETA_SQ: f64 = 1.2;

/// Length of the longest common subsequence (dynamic programming).
pub fn lcs_len<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(cand: &[S], refs: &RefSet) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    refs.refs()
        .iter()
        .map(|r| {
            let lcs = lcs_len(cand, r) as f64;
            if lcs == 0.0 {
                return 0.0;
            }
            let p = lcs / cand.len() as f64;
            let rec = lcs / r.len() as f64;
            (1.0 + ROUGE_BETA_SQ) * p * rec / (rec + ROUGE_BETA_SQ * p)
        })
        .fold(0.0, f64::max)
}
