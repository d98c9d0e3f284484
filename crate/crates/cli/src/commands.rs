use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{AnnotateArgs, Cli, Command, Common, DataArgs, EvalArgs, GenCorpusArgs, ScoreArgs, TrainArgs};
use crate::config::{keyword, parse_cuts, pick, FileConfig};
use crate::manifest::Manifest;
use crate::UsageError;
use qsat::data::{gen_synthetic_corpus, load_coco_json, save_coco_json, Dataset, SynthConfig, DEFAULT_MIN_COUNT};
use qsat::metrics::{bleu_n, build_df_stats, cider, rouge_l, tokenize, CiderVariant, ImageId, RefSet};
use qsat::model::{load_checkpoint, save_checkpoint};
use qsat::quality::{annotate_with_stats, write_annotations, AnnotateOptions, QualityLevel, TableMode, ThresholdTable};
use qsat::training::{level_sweep, evaluate_model, Method, MetricRow, OptimizerKind, SubstitutionMode, TrainConfig, Trainer};

const STREAMS: [&str; 5] = ["corpus=1", "split=2", "init=3", "cross-entropy=4", "reinforce=5"];
const CORPUS_FILE: &str = "corpus.json";
const ANNOTATION_FILE: &str = "annotations.jsonl";
const MODEL_FILE: &str = "model.json";
const TRAIN_LOG_FILE: &str = "train.log.jsonl";
const METRICS_FILE: &str = "metrics.jsonl";
const SCORES_FILE: &str = "scores.jsonl";

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Annotate(a) => annotate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
    }
}

fn prepare(common: &Common) -> Result<FileConfig> {
    let file = FileConfig::load(common.config.as_deref())?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(file)
}

fn load_data(data: &DataArgs, file: &FileConfig) -> Result<(Dataset, usize)> {
    let min_count = pick(data.min_count, file.min_count, DEFAULT_MIN_COUNT);
    let ds = load_coco_json(&data.data, min_count).with_context(|| format!("loading {}", data.data.display()))?;
    Ok((ds, min_count))
}

fn split<'a>(ds: &'a Dataset, name: &str) -> Result<&'a [RefSet]> {
    let s = match name {
        "train" => &ds.train,
        "val" => &ds.val,
        "test" => &ds.test,
        _ => return Err(UsageError(format!("unknown split {name:?}; expected train, val or test")).into()),
    };
    if s.is_empty() {
        return Err(qsat::Error::Format(format!("split {name} is empty")).into());
    }
    Ok(s)
}

fn table(mode: TableMode, cuts: Option<Vec<f64>>) -> Result<ThresholdTable> {
    Ok(match cuts {
        Some(c) => ThresholdTable::new(mode, c)?,
        None => ThresholdTable::default_for(mode),
    })
}

fn cuts_arg(cli: Option<&String>, file: Option<Vec<f64>>) -> Result<Option<Vec<f64>>> {
    match cli {
        Some(s) => Ok(Some(parse_cuts(s)?)),
        None => Ok(file),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let f = prepare(&a.common)?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_images: pick(a.n_images, f.n_images, d.n_images),
        k: pick(a.refs_per_image, f.refs_per_image, d.k),
        vocab_size: pick(a.vocab_size, f.vocab_size, d.vocab_size),
        n_topics: pick(a.n_topics, f.n_topics, d.n_topics),
        idiosyncrasy: pick(a.idiosyncrasy, f.idiosyncrasy, d.idiosyncrasy),
        seed: pick(a.common.seed, f.seed, d.seed),
    };
    let ds = gen_synthetic_corpus(&cfg)?;
    let out = &a.common.out;
    save_coco_json(&ds, &out.join(CORPUS_FILE))?;
    println!(
        "{} images ({} train / {} val / {} test), vocabulary {}",
        ds.n_images(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.vocab.len()
    );
    let mut m = Manifest::new("gen-corpus", cfg.seed, serde_json::to_value(&cfg)?, &STREAMS[..2]);
    m.artifact(out, CORPUS_FILE)?;
    m.write(out)?;
    Ok(())
}

fn parse_mode(s: &str) -> Result<TableMode> {
    match s {
        "xe" => Ok(TableMode::Xe),
        "rl" => Ok(TableMode::Rl),
        _ => Err(UsageError(format!("unknown table mode {s:?}; expected xe or rl")).into()),
    }
}

fn annotate(a: AnnotateArgs) -> Result<()> {
    let f = prepare(&a.common)?;
    let (ds, min_count) = load_data(&a.data, &f)?;
    let mode = parse_mode(&pick(a.mode, f.mode.clone(), "xe".into()))?;
    let table = table(mode, cuts_arg(a.cuts.as_ref(), f.cuts.clone())?)?;
    let split_name = pick(a.split, f.split.clone(), "train".into());
    let refs = split(&ds, &split_name)?;
    let opts = AnnotateOptions {
        self_inclusion: pick(a.self_inclusion, f.self_inclusion, true),
        variant: keyword(
            "CIDEr variant",
            &pick(a.cider_variant, f.cider_variant.clone(), "cider-d".into()),
        )?,
    };
    // held-out splits are scored with their own document frequencies
    let stats = if split_name == "train" {
        ds.stats.clone()
    } else {
        build_df_stats(refs)?
    };
    let ann = annotate_with_stats(refs, &stats, &table, opts)?;
    let out = &a.common.out;
    let path = out.join(ANNOTATION_FILE);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_annotations(&ann, BufWriter::new(file))?;
    println!("{} captions, level histogram {:?}", ann.len(), ann.histogram);

    let seed = pick(a.common.seed, f.seed, 0);
    let config = json!({
        "data": a.data.data.display().to_string(),
        "min_count": min_count,
        "split": split_name,
        "mode": mode.to_string(),
        "cuts": table.cuts(),
        "self_inclusion": opts.self_inclusion,
        "cider_variant": opts.variant,
    });
    let mut m = Manifest::new("annotate", seed, config, &[]);
    m.input(&a.data.data)?;
    m.artifact(out, ANNOTATION_FILE)?;
    m.write(out)?;
    Ok(())
}

/// Settings of a training run after merging flags, file and defaults.
#[derive(Debug, Clone, Serialize)]
struct TrainPlan {
    method: Method,
    /// The trainer actually run: SAT with either switch on runs as the
    /// switchable Q-SAT trainer.
    runs_as: Method,
    d_model: usize,
    max_len: usize,
    min_count: usize,
    eval_split: Option<String>,
    init: Option<String>,
    train: TrainConfig,
}

fn train_plan(a: &TrainArgs, f: &FileConfig, min_count: usize) -> Result<TrainPlan> {
    let d = TrainConfig::default();
    let method: Method = keyword("method", &pick(a.method.clone(), f.method.clone(), "qsat".into()))?;
    let on = method == Method::Qsat;
    let center = pick(a.center_level, f.center_level, on);
    let retain = pick(a.retain_low_reward, f.retain_low_reward, on);
    if (center || retain) && !matches!(method, Method::Sat | Method::Qsat) {
        bail!(UsageError(format!(
            "--center-level and --retain-low-reward apply to sat and qsat, not {}",
            method.name()
        )));
    }
    let runs_as = if method == Method::Sat && (center || retain) {
        Method::Qsat
    } else {
        method
    };
    let optimizer: OptimizerKind = match a.optimizer.clone().or(f.optimizer.clone()) {
        Some(s) => keyword("optimizer", &s)?,
        None => d.optimizer,
    };
    let substitution: SubstitutionMode = match a.substitution.clone().or(f.substitution.clone()) {
        Some(s) => keyword("substitution mode", &s)?,
        None => d.substitution,
    };
    let cider_variant: CiderVariant = match a.cider_variant.clone().or(f.cider_variant.clone()) {
        Some(s) => keyword("CIDEr variant", &s)?,
        None => d.cider_variant,
    };
    let train = TrainConfig {
        k: pick(a.k, f.k, d.k),
        xe_epochs: pick(a.xe_epochs, f.xe_epochs, d.xe_epochs),
        epochs: pick(a.epochs, f.epochs, d.epochs),
        lr: pick(a.lr, f.lr, d.lr),
        rl_lr: a.rl_lr.or(f.rl_lr).or(d.rl_lr),
        optimizer,
        batch_size: pick(a.batch_size, f.batch_size, d.batch_size),
        dropout: pick(a.dropout, f.dropout, d.dropout),
        enable_center_level: center,
        enable_low_reward_retention: retain,
        substitution,
        xe_table: table(TableMode::Xe, cuts_arg(a.xe_cuts.as_ref(), f.xe_cuts.clone())?)?,
        rl_table: table(TableMode::Rl, cuts_arg(a.rl_cuts.as_ref(), f.rl_cuts.clone())?)?,
        self_inclusion: pick(a.self_inclusion, f.self_inclusion, d.self_inclusion),
        cider_variant,
        seed: pick(a.common.seed, f.seed, d.seed),
        workers: pick(a.workers, f.workers, d.workers),
    };
    train.validate()?;
    let eval_split = pick(a.eval_split.clone(), f.eval_split.clone(), "val".into());
    Ok(TrainPlan {
        method,
        runs_as,
        d_model: pick(a.d_model, f.d_model, 32),
        max_len: pick(a.max_len, f.max_len, 16),
        min_count,
        eval_split: (eval_split != "none").then_some(eval_split),
        init: a.init.as_ref().map(|p| p.display().to_string()),
        train,
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let f = prepare(&a.common)?;
    let (ds, min_count) = load_data(&a.data, &f)?;
    let plan = train_plan(&a, &f, min_count)?;
    let cfg = plan.train.clone();
    if cfg.workers > 1 {
        eprintln!(
            "note: {} workers parallelize sampling and scoring only; bitwise reproducibility is guaranteed for single-worker runs",
            cfg.workers
        );
    }
    let controlled = plan.method != Method::Scst;
    let mut trainer = match &a.init {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if plan.method == Method::Scst && ckpt.controlled {
                bail!(UsageError("scst trains the uncontrolled model; the checkpoint is controlled".into()));
            }
            if plan.method != Method::Scst && !ckpt.controlled {
                bail!(UsageError(format!(
                    "{} needs a controlled checkpoint; this one has no level embedding",
                    plan.method.name()
                )));
            }
            Trainer::from_checkpoint(ckpt, cfg.clone())?
        }
        None => Trainer::init(&ds, plan.d_model, plan.max_len, cfg.clone(), controlled)?,
    };
    let eval_refs = match &plan.eval_split {
        Some(name) => Some(split(&ds, name)?.to_vec()),
        None => None,
    };

    let out = &a.common.out;
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    trainer.fit(&ds, plan.runs_as, eval_refs.as_deref(), |entry, _| {
        let line = serde_json::to_string(entry).map_err(|e| qsat::Error::Format(e.to_string()))?;
        writeln!(log, "{line}")?;
        let top = entry.metrics.last().map(|m| format!(" cider@{} {:.4}", m.level, m.cider));
        let reward = entry.mean_reward.map(|r| format!(" reward {r:.4}"));
        println!(
            "epoch {:>3} {:>4} loss {:.4}{}{}",
            entry.epoch,
            entry.phase,
            entry.loss,
            reward.unwrap_or_default(),
            top.unwrap_or_default()
        );
        Ok(())
    })?;
    log.flush()?;
    drop(log);
    save_checkpoint(&trainer.checkpoint(None), &out.join(MODEL_FILE))?;

    let mut m = Manifest::new("train", cfg.seed, serde_json::to_value(&plan)?, &STREAMS[2..]);
    m.input(&a.data.data)?;
    if let Some(p) = &a.init {
        m.input(p)?;
    }
    m.artifact(out, TRAIN_LOG_FILE)?;
    m.artifact(out, MODEL_FILE)?;
    m.write(out)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let f = prepare(&a.common)?;
    let (ds, min_count) = load_data(&a.data, &f)?;
    let ckpt = load_checkpoint(&a.model)?;
    let n_levels = ckpt.params.config().n_levels;
    let split_name = pick(a.split, f.split.clone(), "test".into());
    let refs = split(&ds, &split_name)?;
    let stats = build_df_stats(refs)?;
    let d = ckpt.params.config().d_model;
    let images: Vec<_> = refs.iter().map(|s| (ds.context(&s.image_id, d), s.clone())).collect();
    let level = pick(a.level, f.level, n_levels - 1);
    if level >= n_levels {
        bail!(UsageError(format!("level {level} out of range; the model has {n_levels} levels")));
    }
    let rows = if a.sweep {
        level_sweep(&ckpt.params, &ckpt.vocab, &images, &stats)?
    } else {
        vec![evaluate_model(&ckpt.params, &ckpt.vocab, &images, QualityLevel(level), &stats)?]
    };
    print!("{}", MetricRow::table(&rows));
    let out = &a.common.out;
    write_jsonl(&out.join(METRICS_FILE), &rows)?;

    let config = json!({
        "data": a.data.data.display().to_string(),
        "model": a.model.display().to_string(),
        "min_count": min_count,
        "split": split_name,
        "level": level,
        "sweep": a.sweep,
    });
    let mut m = Manifest::new("eval", pick(a.common.seed, f.seed, 0), config, &[]);
    m.input(&a.data.data)?;
    m.input(&a.model)?;
    m.artifact(out, METRICS_FILE)?;
    m.write(out)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Candidate {
    image_id: serde_json::Value,
    caption: String,
}

#[derive(Debug, Clone, Serialize)]
struct ScoreRow {
    image_id: String,
    bleu1: f64,
    bleu4: f64,
    rouge_l: f64,
    cider: f64,
}

fn score(a: ScoreArgs) -> Result<()> {
    let f = prepare(&a.common)?;
    let (ds, min_count) = load_data(&a.data, &f)?;
    let split_name = pick(a.split, f.split.clone(), "test".into());
    let refs = split(&ds, &split_name)?;
    let stats = build_df_stats(refs)?;

    let reader = BufReader::new(File::open(&a.cands).with_context(|| format!("opening {}", a.cands.display()))?);
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Candidate = serde_json::from_str(&line).map_err(|e| {
            qsat::Error::Format(format!("{} line {}: {e}", a.cands.display(), n + 1))
        })?;
        let id = match c.image_id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let set = refs
            .iter()
            .find(|s| s.image_id == ImageId(id.clone()))
            .ok_or_else(|| qsat::Error::Format(format!("image {id} is not in the {split_name} split")))?;
        let (b1, b4, rl, ci) = match tokenize(&c.caption) {
            Ok(cand) => (
                bleu_n(&cand, set, 1),
                bleu_n(&cand, set, 4),
                rouge_l(&cand, set),
                cider(&cand, set, &stats, CiderVariant::CiderD),
            ),
            Err(_) => (0.0, 0.0, 0.0, 0.0),
        };
        rows.push(ScoreRow {
            image_id: id,
            bleu1: b1,
            bleu4: b4,
            rouge_l: rl,
            cider: ci,
        });
    }
    if rows.is_empty() {
        return Err(qsat::Error::Format(format!("{} has no candidates", a.cands.display())).into());
    }
    let n = rows.len() as f64;
    let mean = |g: fn(&ScoreRow) -> f64| rows.iter().map(g).sum::<f64>() / n;
    println!("{:>7} {:>8} {:>8} {:>8} {:>8}", "images", "BLEU-1", "BLEU-4", "ROUGE-L", "CIDEr-D");
    println!(
        "{:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        rows.len(),
        mean(|r| r.bleu1),
        mean(|r| r.bleu4),
        mean(|r| r.rouge_l),
        mean(|r| r.cider)
    );
    let out = &a.common.out;
    write_jsonl(&out.join(SCORES_FILE), &rows)?;

    let config = json!({
        "data": a.data.data.display().to_string(),
        "cands": a.cands.display().to_string(),
        "min_count": min_count,
        "split": split_name,
    });
    let mut m = Manifest::new("score", pick(a.common.seed, f.seed, 0), config, &[]);
    m.input(&a.data.data)?;
    m.input(&a.cands)?;
    m.artifact(out, SCORES_FILE)?;
    m.write(out)?;
    Ok(())
}
