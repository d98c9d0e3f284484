//! Quality-controlled caption generation.
//!
//! The crate scores captions with consensus metrics, bins the scores into
//! discrete quality levels, conditions a small autoregressive captioner on
//! those levels through an additive embedding, and trains it with
//! cross-entropy, self-critical policy gradient, self-annotated training
//! and its quality-oriented extension.
//!
//! Module map:
//!
//! - [`metrics`]: tokenizer, n-gram statistics, CIDEr-D, BLEU-n, ROUGE-L
//! - [`quality`]: threshold tables and dataset annotation
//! - [`model`]: vocabulary, parameters, the decoder and its backward pass
//! - [`training`]: the XE / SCST / SAT / Q-SAT trainers and evaluation
//! - [`data`]: synthetic corpora and COCO-style caption files

pub mod data;
mod error;
pub mod metrics;
pub mod model;
pub mod quality;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
