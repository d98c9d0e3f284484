use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "qsat", version, about = "Quality-controlled caption training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic caption corpus in the COCO-style JSON schema
    GenCorpus(GenCorpusArgs),
    /// Score every reference caption against its co-references and bin it
    Annotate(AnnotateArgs),
    /// Train a captioner
    Train(TrainArgs),
    /// Greedy-decode a split and report metrics
    Eval(EvalArgs),
    /// Score candidate captions from a file against a split
    Score(ScoreArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory for artifacts and the manifest
    #[arg(long)]
    pub out: PathBuf,

    /// Flat TOML file with default settings
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Seed for every random stream
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub n_images: Option<usize>,

    /// References per image
    #[arg(long)]
    pub refs_per_image: Option<usize>,

    /// Mainstream vocabulary size
    #[arg(long)]
    pub vocab_size: Option<usize>,

    #[arg(long)]
    pub n_topics: Option<usize>,

    /// Fraction of each image's references drawn from the long tail
    #[arg(long)]
    pub idiosyncrasy: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Corpus file (COCO-style JSON)
    #[arg(long)]
    pub data: PathBuf,

    /// Words seen fewer times in training captions map to <unk>
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub data: DataArgs,

    /// Threshold table: xe or rl
    #[arg(long)]
    pub mode: Option<String>,

    /// Comma-separated cut points replacing the table's defaults
    #[arg(long)]
    pub cuts: Option<String>,

    /// Split to annotate
    #[arg(long)]
    pub split: Option<String>,

    /// Keep each caption in its own reference set when scoring it
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub self_inclusion: Option<bool>,

    /// cider-d or plain
    #[arg(long)]
    pub cider_variant: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub data: DataArgs,

    /// xe, scst, sat or qsat
    #[arg(long)]
    pub method: Option<String>,

    /// Estimate a center level before sampling (defaults on for qsat)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub center_level: Option<bool>,

    /// Keep below-baseline samples at the center level (defaults on for qsat)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub retain_low_reward: Option<bool>,

    /// Checkpoint to continue from
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Total epochs
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Cross-entropy epochs before reinforcement starts
    #[arg(long)]
    pub xe_epochs: Option<usize>,

    /// Learning rate for cross-entropy epochs
    #[arg(long)]
    pub lr: Option<f64>,

    /// Learning rate for reinforcement epochs (default: its own default, not --lr)
    #[arg(long)]
    pub rl_lr: Option<f64>,

    /// sgd or adam
    #[arg(long)]
    pub optimizer: Option<String>,

    /// Samples per image
    #[arg(long)]
    pub k: Option<usize>,

    /// Images per optimizer step
    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub dropout: Option<f64>,

    /// cache-reuse or recompute-shared-mask
    #[arg(long)]
    pub substitution: Option<String>,

    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub self_inclusion: Option<bool>,

    #[arg(long)]
    pub cider_variant: Option<String>,

    /// Comma-separated XE cut points
    #[arg(long)]
    pub xe_cuts: Option<String>,

    /// Comma-separated RL cut points
    #[arg(long)]
    pub rl_cuts: Option<String>,

    #[arg(long)]
    pub d_model: Option<usize>,

    #[arg(long)]
    pub max_len: Option<usize>,

    /// Threads for RL sampling and scoring
    #[arg(long)]
    pub workers: Option<usize>,

    /// Split evaluated after every epoch; "none" to skip
    #[arg(long)]
    pub eval_split: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub data: DataArgs,

    /// Checkpoint to evaluate
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub split: Option<String>,

    /// Quality level to decode at (default: highest)
    #[arg(long)]
    pub level: Option<usize>,

    /// Report every level
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub data: DataArgs,

    /// JSON lines of {"image_id": ..., "caption": "..."}
    #[arg(long)]
    pub cands: PathBuf,

    #[arg(long)]
    pub split: Option<String>,
}
