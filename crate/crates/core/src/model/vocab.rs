use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::metrics::{Caption, Token};
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const SENTINELS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Dense token index. Indices 0..4 are the PAD, BOS, EOS and UNK
/// sentinels; corpus words follow in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps every word seen at least `min_count` times.
    pub fn build<'a, I>(captions: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a Caption>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in captions {
            for t in c.tokens() {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let words = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count.max(1) && !SENTINELS.contains(&w))
            .map(|(w, _)| w.to_string());
        Self::from_words(words)
    }

    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut all: Vec<String> = SENTINELS.iter().map(|s| s.to_string()).collect();
        all.extend(words.into_iter().filter(|w| !SENTINELS.contains(&w.as_str())));
        let index = all.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words: all, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word(&self, i: usize) -> Option<&str> {
        self.words.get(i).map(String::as_str)
    }

    pub fn get(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn encode(&self, caption: &[Token]) -> Result<Vec<usize>> {
        caption
            .iter()
            .map(|t| self.get(t.as_str()).ok_or_else(|| Error::UnknownToken(t.to_string())))
            .collect()
    }

    /// Out-of-vocabulary words map to UNK.
    pub fn encode_lossy(&self, caption: &[Token]) -> Vec<usize> {
        caption.iter().map(|t| self.get(t.as_str()).unwrap_or(UNK)).collect()
    }

    /// Sentinels other than UNK are skipped.
    pub fn decode(&self, ids: &[usize]) -> Vec<Token> {
        ids.iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .filter_map(|&i| self.words.get(i))
            .map(|w| Token::new(w.clone()).expect("vocabulary words are valid tokens"))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        if words.len() < SENTINELS.len() || words[..SENTINELS.len()] != SENTINELS {
            return Err(Error::Format("vocabulary must start with the sentinel tokens".into()));
        }
        let index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if index.len() != words.len() {
            return Err(Error::Format("vocabulary contains duplicate words".into()));
        }
        Ok(Vocab { words, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Vec<String> {
        v.words
    }
}
