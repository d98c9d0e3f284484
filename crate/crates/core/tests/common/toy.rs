//! The small instance used by gradient and invariant tests: 8 words plus
//! the 4 sentinels, d = 8, three levels, captions of at most 4 words.

use qsat::metrics::{build_df_stats, Caption, DfStats, ImageId, RefSet};
use qsat::model::{ImageContext, ModelConfig, PolicyParams, Vocab};
use qsat::rng::{stream, Stream};
use qsat::training::TrainConfig;
use rand::Rng;

pub const WORDS: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];
pub const D: usize = 8;
pub const MAX_LEN: usize = 5;

pub struct Toy {
    pub params: PolicyParams,
    pub vocab: Vocab,
    pub ctx: ImageContext,
    pub refs: RefSet,
    pub stats: DfStats,
}

fn caption(s: &str) -> Caption {
    Caption::from_words(&s.split(' ').collect::<Vec<_>>()).unwrap()
}

pub fn refset(id: &str, caps: &[&str]) -> RefSet {
    RefSet::new(ImageId(id.into()), caps.iter().map(|c| caption(c)).collect()).unwrap()
}

/// Parameters drawn at five times the usual scale so that distributions
/// are far from uniform.
pub fn toy_with(seed: u64, n_levels: usize, refs: RefSet) -> Toy {
    let vocab = Vocab::from_words(WORDS.iter().map(|w| w.to_string()));
    assert_eq!(vocab.len(), 12);
    let cfg = ModelConfig::new(vocab.len(), D, n_levels, MAX_LEN);
    let mut rng = stream(seed, Stream::Init);
    let mut params = PolicyParams::init(cfg, &mut rng).unwrap();
    for x in params.as_mut_slice() {
        *x *= 5.0;
    }
    let feature = (0..D).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let other = refset("other", &["e f g h", "f g h"]);
    let stats = build_df_stats(&[refs.clone(), other]).unwrap();
    Toy {
        params,
        vocab,
        ctx: ImageContext {
            image_id: ImageId("toy".into()),
            feature,
        },
        refs,
        stats,
    }
}

pub fn toy(seed: u64) -> Toy {
    toy_with(seed, 3, refset("toy", &["a b c", "a b d e", "b c"]))
}

/// k = 2, dropout off.
pub fn toy_config() -> TrainConfig {
    TrainConfig {
        k: 2,
        dropout: 0.0,
        ..TrainConfig::default()
    }
}
