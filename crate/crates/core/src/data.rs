//! Caption corpora: a seeded synthetic generator with a controllable share
//! of idiosyncratic references, and COCO/Karpathy-style JSON files.
//!
//! File schema (extra keys are ignored):
//!
//! ```json
//! {"images": [
//!   {"id": 1, "split": "train", "topic": 3,
//!    "sentences": [{"tokens": ["a", "man", "rides"], "raw": "A man rides."}]}
//! ]}
//! ```
//!
//! `split` is one of `train`, `restval` (merged into train), `val`, `test`.
//! `id` may be a number or a string. `topic` is optional; when present it
//! keys the synthetic image feature, otherwise the id does.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{build_df_stats, Caption, DfStats, ImageId, RefSet, Token};
use crate::model::{ImageContext, Vocab};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

/// Words per topic template.
pub const TEMPLATE_LEN: usize = 8;
pub const MIN_SENT_LEN: usize = 4;
pub const MAX_SENT_LEN: usize = 12;
pub const DEFAULT_MIN_COUNT: usize = 2;
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// Per-token substitution rate in mainstream references, drawn per
/// reference from this range.
const MAINSTREAM_SUB: (f64, f64) = (0.0, 0.2);
/// Share of mainstream references that stop early, after
/// `MIN_SENT_LEN..TEMPLATE_LEN` template words.
const MAINSTREAM_BRIEF: f64 = 0.4;
/// Per-token deletion rate in mainstream references.
const MAINSTREAM_DROP: f64 = 0.08;
/// Per-token insertion rate in mainstream references.
const MAINSTREAM_INSERT: f64 = 0.05;
/// Longest template opening an idiosyncratic reference keeps before
/// drifting into tail words.
const IDIO_MAX_OPENING: usize = 6;
/// Long-tail words available to each topic's idiosyncratic references.
const TAIL_PER_TOPIC: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: usize,
    /// References per image.
    pub k: usize,
    /// Size of the mainstream word pool.
    pub vocab_size: usize,
    pub n_topics: usize,
    /// Fraction of each image's references drawn from the long tail.
    pub idiosyncrasy: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 500,
            k: 5,
            vocab_size: 60,
            n_topics: 10,
            idiosyncrasy: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if !(0.0..=1.0).contains(&self.idiosyncrasy) {
            return Err(Error::Config(format!("idiosyncrasy must be in [0, 1], got {}", self.idiosyncrasy)));
        }
        if self.n_images == 0 || self.n_topics == 0 {
            return Err(Error::Config("need at least one image and one topic".into()));
        }
        // each topic owns a distinct subject word plus TEMPLATE_LEN - 1 shared slots
        if self.vocab_size < self.n_topics + TEMPLATE_LEN - 1 {
            return Err(Error::Config(format!(
                "vocab_size {} too small for {} topics (need at least {})",
                self.vocab_size,
                self.n_topics,
                self.n_topics + TEMPLATE_LEN - 1
            )));
        }
        Ok(())
    }

    /// Idiosyncratic references per image: `round(idiosyncrasy * k)`.
    pub fn n_idiosyncratic(&self) -> usize {
        (self.idiosyncrasy * self.k as f64).round() as usize
    }
}

/// Train/val/test reference sets with the vocabulary and document
/// frequencies of the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<RefSet>,
    pub val: Vec<RefSet>,
    pub test: Vec<RefSet>,
    pub vocab: Vocab,
    pub stats: DfStats,
    /// Feature keys for images that carry a latent topic.
    pub topics: BTreeMap<ImageId, u64>,
    pub min_count: usize,
}

impl Dataset {
    pub fn from_splits(
        train: Vec<RefSet>,
        val: Vec<RefSet>,
        test: Vec<RefSet>,
        topics: BTreeMap<ImageId, u64>,
        min_count: usize,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for set in train.iter().chain(&val).chain(&test) {
            if !seen.insert(set.image_id.clone()) {
                return Err(Error::Config(format!("image {} appears more than once", set.image_id)));
            }
        }
        let stats = build_df_stats(&train)?;
        let vocab = Vocab::build(train.iter().flat_map(|s| s.refs()), min_count);
        Ok(Dataset {
            train,
            val,
            test,
            vocab,
            stats,
            topics,
            min_count,
        })
    }

    pub fn n_images(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    /// The synthetic feature for an image, `d` values in [-1, 1].
    pub fn context(&self, image_id: &ImageId, d: usize) -> ImageContext {
        let key = match self.topics.get(image_id) {
            Some(&t) => t,
            None => fnv1a(image_id.0.as_bytes()),
        };
        ImageContext {
            image_id: image_id.clone(),
            feature: feature_vector(key, d),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic expansion of `key` into `d` values in [-1, 1].
pub fn feature_vector(key: u64, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(key ^ 0x9e37_79b9_7f4a_7c15);
    (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn word(prefix: char, i: usize) -> Token {
    Token::new(format!("{prefix}{i}")).expect("generated words are valid tokens")
}

pub fn gen_synthetic_corpus(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Stream::Corpus);

    let templates: Vec<Vec<Token>> = (0..cfg.n_topics)
        .map(|t| {
            let mut words = vec![word('w', t)];
            words.extend((1..TEMPLATE_LEN).map(|_| word('w', rng.gen_range(cfg.n_topics..cfg.vocab_size))));
            words
        })
        .collect();

    let n_idio = cfg.n_idiosyncratic();
    let mut images = Vec::with_capacity(cfg.n_images);
    let mut topics = BTreeMap::new();
    for i in 0..cfg.n_images {
        let topic = rng.gen_range(0..cfg.n_topics);
        let template = &templates[topic];
        let mut refs = Vec::with_capacity(cfg.k);
        for j in 0..cfg.k {
            let tokens = if j < cfg.k - n_idio {
                mainstream(template, cfg.vocab_size, &mut rng)
            } else {
                idiosyncratic(template, topic, &mut rng)
            };
            refs.push(Caption::new(tokens)?);
        }
        let id = ImageId(format!("syn{i:05}"));
        topics.insert(id.clone(), topic as u64);
        images.push(RefSet::new(id, refs)?);
    }
    let pooled = Dataset::from_splits(images, Vec::new(), Vec::new(), topics, 1)?;
    split_dataset(&pooled, DEFAULT_FRACTIONS, cfg.seed)
}

fn mainstream(template: &[Token], vocab_size: usize, rng: &mut ChaCha8Rng) -> Vec<Token> {
    let mut out = Vec::with_capacity(MAX_SENT_LEN);
    let sub = rng.gen_range(MAINSTREAM_SUB.0..MAINSTREAM_SUB.1);
    let keep = if rng.gen::<f64>() < MAINSTREAM_BRIEF {
        rng.gen_range(MIN_SENT_LEN..TEMPLATE_LEN)
    } else {
        TEMPLATE_LEN
    };
    for t in &template[..keep] {
        if rng.gen::<f64>() < MAINSTREAM_DROP {
            continue;
        }
        if rng.gen::<f64>() < sub {
            out.push(word('w', rng.gen_range(0..vocab_size)));
        } else {
            out.push(t.clone());
        }
        if rng.gen::<f64>() < MAINSTREAM_INSERT {
            out.push(word('w', rng.gen_range(0..vocab_size)));
        }
    }
    while out.len() < MIN_SENT_LEN {
        out.push(template[out.len()].clone());
    }
    out.truncate(MAX_SENT_LEN);
    out
}

fn idiosyncratic(template: &[Token], topic: usize, rng: &mut ChaCha8Rng) -> Vec<Token> {
    // a template opening of random length, then at least one tail word
    let opening = rng.gen_range(0..=IDIO_MAX_OPENING);
    let len = rng.gen_range(MIN_SENT_LEN.max(opening + 1)..=MAX_SENT_LEN);
    let mut out = template[..opening].to_vec();
    out.extend((opening..len).map(|_| word('x', topic * TAIL_PER_TOPIC + rng.gen_range(0..TAIL_PER_TOPIC))));
    out
}

/// Re-partitions every image of `ds` into train/val/test by `fractions`
/// (rounded counts for val and test, the rest to train), shuffled by
/// `seed`. Vocabulary and document frequencies are rebuilt from the new
/// training split.
pub fn split_dataset(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions must be in [0, 1] and sum to 1, got {fractions:?}")));
    }
    let mut all: Vec<RefSet> = ds.train.iter().chain(&ds.val).chain(&ds.test).cloned().collect();
    all.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let n = all.len();
    let n_val = (fractions[1] * n as f64).round() as usize;
    let n_test = (fractions[2] * n as f64).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::Config(format!(
            "split {fractions:?} of {n} images leaves an empty split"
        )));
    }
    let mut rng = stream(seed, Stream::Split);
    all.shuffle(&mut rng);
    let test = all.split_off(n - n_test);
    let val = all.split_off(n - n_test - n_val);
    Dataset::from_splits(all, val, test, ds.topics.clone(), ds.min_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SplitName {
    #[serde(alias = "restval")]
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum IdValue {
    Num(u64),
    Str(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoSentence {
    tokens: Caption,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: IdValue,
    split: SplitName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topic: Option<u64>,
    sentences: Vec<CocoSentence>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_coco_json(text: &str, path: &Path, min_count: usize) -> Result<Dataset> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut splits: [Vec<RefSet>; 3] = Default::default();
    let mut topics = BTreeMap::new();
    for (i, img) in file.images.into_iter().enumerate() {
        let id = match img.id {
            IdValue::Num(n) => ImageId(n.to_string()),
            IdValue::Str(s) => ImageId(s),
        };
        let refs: Vec<Caption> = img.sentences.into_iter().map(|s| s.tokens).collect();
        let set = RefSet::new(id.clone(), refs).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("images[{i}]: {e}"),
        })?;
        if let Some(t) = img.topic {
            topics.insert(id, t);
        }
        splits[img.split as usize].push(set);
    }
    let [train, val, test] = splits;
    if train.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: "no training images".into(),
        });
    }
    Dataset::from_splits(train, val, test, topics, min_count)
}

/// Reads a caption file; words seen fewer than `min_count` times in the
/// training split map to UNK when encoded.
pub fn load_coco_json(path: &Path, min_count: usize) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_coco_json(&text, path, min_count)
}

/// Writes `ds` in the same schema `load_coco_json` reads.
pub fn to_coco_json(ds: &Dataset) -> Result<String> {
    let mut images = Vec::with_capacity(ds.n_images());
    for (split, sets) in [(SplitName::Train, &ds.train), (SplitName::Val, &ds.val), (SplitName::Test, &ds.test)] {
        for set in sets {
            images.push(CocoImage {
                id: IdValue::Str(set.image_id.0.clone()),
                split,
                topic: ds.topics.get(&set.image_id).copied(),
                sentences: set
                    .refs()
                    .iter()
                    .map(|c| CocoSentence {
                        tokens: c.clone(),
                        raw: None,
                    })
                    .collect(),
            });
        }
    }
    serde_json::to_string_pretty(&CocoFile { images }).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_coco_json(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_coco_json(ds)?)?;
    Ok(())
}
