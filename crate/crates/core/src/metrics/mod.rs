//! Tokenization, n-gram statistics and the consensus caption metrics.
//!
//! All scores are plain `f64`. CIDEr-D lives in `[0, 10]`, BLEU-n and
//! ROUGE-L in `[0, 1]`. Every scoring function is pure; [`DfStats`] is
//! immutable once built and can be shared across threads.

mod bleu;
mod cider;
mod rouge;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bleu::{bleu_n, BLEU_EPSILON};
pub use cider::{cider, cider_d, CiderVariant, CIDER_D_SIGMA};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA_SQ};

/// Longest n-gram order used by CIDEr-D and BLEU.
pub const MAX_NGRAM: usize = 4;

/// A lowercase word with no internal whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(Error::InvalidToken(text));
        }
        Ok(Token(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Token {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Token::new(s)
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Token {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A non-empty tokenized sentence. Begin/end markers are not stored here;
/// the model layer adds them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Token>", into = "Vec<Token>")]
pub struct Caption(Vec<Token>);

impl Caption {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyCaption);
        }
        Ok(Caption(tokens))
    }

    /// Builds a caption from already-normalized words.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let tokens = words
            .iter()
            .map(|w| Token::new(w.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Caption::new(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }

    /// Space-joined surface form.
    pub fn text(&self) -> String {
        join(&self.0)
    }
}

impl Deref for Caption {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl TryFrom<Vec<Token>> for Caption {
    type Error = Error;

    fn try_from(v: Vec<Token>) -> Result<Self> {
        Caption::new(v)
    }
}

impl From<Caption> for Vec<Token> {
    fn from(c: Caption) -> Vec<Token> {
        c.0
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

fn join(tokens: &[Token]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t.as_str());
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub String);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        ImageId(s.to_string())
    }
}

/// Ground-truth captions paired with one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefSet {
    pub image_id: ImageId,
    refs: Vec<Caption>,
}

impl RefSet {
    pub fn new(image_id: ImageId, refs: Vec<Caption>) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::EmptyRefSet(image_id.0));
        }
        Ok(RefSet { image_id, refs })
    }

    pub fn refs(&self) -> &[Caption] {
        &self.refs
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }
}

/// Lowercases, strips punctuation and splits on whitespace.
///
/// Every character that is neither alphanumeric nor whitespace is dropped,
/// so `"man's"` becomes `"mans"`.
pub fn tokenize(text: &str) -> Result<Caption> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    let tokens: Vec<Token> = cleaned
        .split_whitespace()
        .map(|w| Token(w.to_string()))
        .collect();
    Caption::new(tokens)
}

/// A contiguous run of tokens, stored space-joined.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ngram(String);

impl Ngram {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut s = String::new();
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(t.as_ref());
        }
        Ngram(s)
    }

    pub fn order(&self) -> usize {
        self.0.split(' ').count()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Ngram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Counts every contiguous window of `n` tokens. Ordered so that sums over
/// the map are reproducible bit for bit.
pub fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> BTreeMap<Ngram, usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(Ngram::from_tokens(window)).or_insert(0) += 1;
    }
    counts
}

/// Corpus document frequencies: for each n-gram (n = 1..=4), the number of
/// images whose reference set contains it at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct DfStats {
    n_images: usize,
    df: HashMap<Ngram, u32>,
}

impl DfStats {
    pub fn n_images(&self) -> usize {
        self.n_images
    }

    /// Document frequency; 0 for unseen n-grams.
    pub fn df(&self, g: &Ngram) -> u32 {
        self.df.get(g).copied().unwrap_or(0)
    }

    /// `ln N - ln max(1, df)`. Unseen n-grams get `ln N`.
    pub fn idf(&self, g: &Ngram) -> f64 {
        let df = f64::from(self.df(g).max(1));
        (self.n_images as f64).ln() - df.ln()
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }
}

pub fn build_df_stats(corpus: &[RefSet]) -> Result<DfStats> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build document frequencies from an empty corpus".into()));
    }
    let mut df: HashMap<Ngram, u32> = HashMap::new();
    for set in corpus {
        let mut seen = BTreeSet::new();
        for r in set.refs() {
            for n in 1..=MAX_NGRAM {
                seen.extend(ngram_counts(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    Ok(DfStats {
        n_images: corpus.len(),
        df,
    })
}
