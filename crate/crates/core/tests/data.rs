use std::collections::BTreeSet;
use std::path::Path;

use qsat::data::{gen_synthetic_corpus, load_coco_json, parse_coco_json, save_coco_json, SynthConfig};
use qsat::metrics::{build_df_stats, ngram_counts, tokenize, ImageId, Ngram};
use qsat::model::UNK;
use qsat::quality::{annotate_with_stats, AnnotateOptions, ThresholdTable};
use qsat::Error;

fn fixture() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/two_images.json"))
}

#[test]
fn loads_fixture_with_numeric_and_string_ids() {
    let ds = load_coco_json(fixture(), 1).unwrap();
    assert_eq!(ds.train.len(), 1);
    assert_eq!(ds.test.len(), 1);
    assert!(ds.val.is_empty());
    assert_eq!(ds.train[0].image_id, ImageId("391895".into()));
    assert_eq!(ds.test[0].image_id, ImageId("522418".into()));
    assert_eq!(ds.train[0].len(), 3);
    assert_eq!(ds.stats.n_images(), 1);
}

#[test]
fn words_outside_training_vocabulary_map_to_unk() {
    let ds = load_coco_json(fixture(), 1).unwrap();
    let ids = ds.vocab.encode_lossy(tokenize("a woman riding a cake").unwrap().tokens());
    assert_eq!(ids[0], ds.vocab.get("a").unwrap());
    assert_eq!(ids[1], UNK);
    assert_eq!(ids[2], ds.vocab.get("riding").unwrap());
    assert_eq!(ids[4], UNK);

    // "bike" appears twice in training captions, "bicycle" once
    let ds2 = load_coco_json(fixture(), 2).unwrap();
    assert!(ds2.vocab.get("bike").is_some());
    assert!(ds2.vocab.get("bicycle").is_none());
}

#[test]
fn missing_sentences_is_a_parse_error() {
    let text = r#"{"images": [{"id": 1, "split": "train"}]}"#;
    match parse_coco_json(text, Path::new("bad.json"), 1) {
        Err(Error::Parse { path, message, .. }) => {
            assert_eq!(path, Path::new("bad.json"));
            assert!(message.contains("sentences"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn empty_sentence_list_is_rejected() {
    let text = r#"{"images": [{"id": 1, "split": "train", "sentences": []}]}"#;
    assert!(matches!(parse_coco_json(text, Path::new("x"), 1), Err(Error::Parse { .. })));
}

#[test]
fn export_and_reload_round_trip() {
    let ds = gen_synthetic_corpus(&SynthConfig {
        n_images: 50,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.json");
    save_coco_json(&ds, &path).unwrap();
    let back = load_coco_json(&path, ds.min_count).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn splits_are_disjoint_and_cover_every_image() {
    let cfg = SynthConfig::default();
    let ds = gen_synthetic_corpus(&cfg).unwrap();
    let ids = |s: &[qsat::metrics::RefSet]| s.iter().map(|r| r.image_id.clone()).collect::<BTreeSet<_>>();
    let (tr, va, te) = (ids(&ds.train), ids(&ds.val), ids(&ds.test));
    assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    assert_eq!(tr.len() + va.len() + te.len(), cfg.n_images);
    assert_eq!(ds.train.len(), 400);
    assert_eq!(ds.val.len(), 50);
    assert_eq!(ds.test.len(), 50);
}

#[test]
fn document_frequencies_come_from_training_split_only() {
    let ds = gen_synthetic_corpus(&SynthConfig::default()).unwrap();
    assert_eq!(ds.stats, build_df_stats(&ds.train).unwrap());
    assert_eq!(ds.stats.n_images(), ds.train.len());
    // a 4-gram seen only outside training has df 0
    let train_grams: BTreeSet<Ngram> = ds
        .train
        .iter()
        .flat_map(|s| s.refs())
        .flat_map(|c| ngram_counts(c.tokens(), 4).into_keys())
        .collect();
    let held_out: Vec<Ngram> = ds
        .val
        .iter()
        .chain(&ds.test)
        .flat_map(|s| s.refs())
        .flat_map(|c| ngram_counts(c.tokens(), 4).into_keys())
        .filter(|g| !train_grams.contains(g))
        .collect();
    assert!(!held_out.is_empty());
    for g in held_out {
        assert_eq!(ds.stats.df(&g), 0, "{}", g.as_str());
    }
}

fn histogram(idiosyncrasy: f64, seed: u64) -> Vec<usize> {
    let ds = gen_synthetic_corpus(&SynthConfig {
        idiosyncrasy,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let ann = annotate_with_stats(&ds.train, &ds.stats, &ThresholdTable::xe(), AnnotateOptions::default()).unwrap();
    ann.histogram
}

#[test]
fn default_corpus_populates_every_level() {
    for seed in 0..3 {
        let h = histogram(0.2, seed);
        let total: usize = h.iter().sum();
        assert_eq!(total, 2000);
        for (level, &n) in h.iter().enumerate() {
            assert!(n as f64 >= 0.02 * total as f64, "seed {seed} level {level}: {h:?}");
        }
    }
}

#[test]
fn no_idiosyncrasy_puts_nearly_everything_in_the_top_level() {
    for seed in 0..3 {
        let h = histogram(0.0, seed);
        let total: usize = h.iter().sum();
        assert!(*h.last().unwrap() as f64 >= 0.9 * total as f64, "seed {seed}: {h:?}");
    }
}
