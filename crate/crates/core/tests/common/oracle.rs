//! Brute-force metric transcriptions used as test oracles.
//!
//! Nothing here calls into the library: captions are plain `&[&str]`,
//! n-grams are `Vec<String>`, vectors are dense over an explicit n-gram
//! universe, and LCS is found by enumerating candidate subsequences.

#![allow(dead_code)]

pub type Sent<'a> = Vec<&'a str>;

fn grams(s: &[&str], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    if s.len() < n {
        return out;
    }
    for i in 0..=(s.len() - n) {
        out.push(s[i..i + n].iter().map(|t| t.to_string()).collect());
    }
    out
}

fn count(s: &[&str], g: &[String]) -> f64 {
    grams(s, g.len()).iter().filter(|h| h.as_slice() == g).count() as f64
}

/// Document frequency over a corpus of reference sets.
pub fn df(corpus: &[Vec<Sent>], g: &[String]) -> f64 {
    corpus
        .iter()
        .filter(|refs| refs.iter().any(|r| count(r, g) > 0.0))
        .count() as f64
}

/// CIDEr-D with sigma 6, candidate clipping, ×10 scaling.
pub fn cider_d(cand: &[&str], refs: &[Sent], corpus: &[Vec<Sent>]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let n_img = corpus.len() as f64;
    let mut per_n = [0.0f64; 4];
    for n in 1..=4 {
        // universe: every n-gram of the candidate and of the refs
        let mut universe: Vec<Vec<String>> = grams(cand, n);
        for r in refs {
            universe.extend(grams(r, n));
        }
        universe.sort();
        universe.dedup();
        let idf: Vec<f64> = universe
            .iter()
            .map(|g| (n_img / df(corpus, g).max(1.0)).ln())
            .collect();
        let vc: Vec<f64> = universe
            .iter()
            .zip(&idf)
            .map(|(g, w)| count(cand, g) * w)
            .collect();
        let nc = vc.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut total = 0.0;
        for r in refs {
            let vr: Vec<f64> = universe
                .iter()
                .zip(&idf)
                .map(|(g, w)| count(r, g) * w)
                .collect();
            let nr = vr.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut num = 0.0;
            for i in 0..universe.len() {
                num += vc[i].min(vr[i]) * vr[i];
            }
            let cos = if nc > 0.0 && nr > 0.0 { num / (nc * nr) } else { 0.0 };
            let delta = cand.len() as f64 - r.len() as f64;
            total += cos * (-(delta * delta) / (2.0 * 36.0)).exp();
        }
        per_n[n - 1] = total / refs.len() as f64;
    }
    10.0 * per_n.iter().sum::<f64>() / 4.0
}

/// BLEU-n: clipped precisions, closest-reference brevity penalty,
/// zero precisions floored at 1e-9.
pub fn bleu(cand: &[&str], refs: &[Sent], n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for m in 1..=n {
        let cg = grams(cand, m);
        let mut uniq = cg.clone();
        uniq.sort();
        uniq.dedup();
        let mut clipped = 0.0;
        for g in &uniq {
            let c = count(cand, g);
            let best = refs.iter().map(|r| count(r, g)).fold(0.0, f64::max);
            clipped += c.min(best);
        }
        let total = cg.len() as f64;
        let p = if total == 0.0 || clipped == 0.0 { 1e-9 } else { clipped / total };
        log_sum += p.ln();
    }
    let c = cand.len() as f64;
    // closest reference length, ties to the shorter
    let mut best_len = refs[0].len() as f64;
    for r in refs {
        let l = r.len() as f64;
        if (l - c).abs() < (best_len - c).abs() || ((l - c).abs() == (best_len - c).abs() && l < best_len) {
            best_len = l;
        }
    }
    let bp = if c > best_len { 1.0 } else { (1.0 - best_len / c).exp() };
    bp * (log_sum / n as f64).exp()
}

fn is_subseq(sub: &[&str], s: &[&str]) -> bool {
    let mut it = s.iter();
    sub.iter().all(|t| it.any(|u| u == t))
}

/// LCS length by enumerating every subsequence of `a` (|a| <= ~16).
pub fn lcs_brute(a: &[&str], b: &[&str]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1u32 << a.len()) {
        let sub: Vec<&str> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        if sub.len() > best && is_subseq(&sub, b) {
            best = sub.len();
        }
    }
    best
}

/// ROUGE-L F-measure with beta^2 = 1.2, maximised over references.
pub fn rouge_l(cand: &[&str], refs: &[Sent]) -> f64 {
    let beta_sq = 1.2;
    let mut best: f64 = 0.0;
    for r in refs {
        let l = lcs_brute(cand, r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / cand.len() as f64;
        let rc = l / r.len() as f64;
        let f = (1.0 + beta_sq) * p * rc / (rc + beta_sq * p);
        best = best.max(f);
    }
    best
}

pub fn words(s: &str) -> Sent<'_> {
    s.split_whitespace().collect()
}
