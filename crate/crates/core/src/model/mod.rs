//! The controllable captioner.
//!
//! A one-block causal attention decoder. The input at position `t` is the
//! sum of a word embedding, a quality-level embedding and a positional
//! embedding:
//!
//! ```text
//! x_t = e_level + e_word[y_t] + e_pos[t]
//! u_t = (x_t + P f) * mask_t            f: image feature, mask_t: dropout
//! h_t = u_t + W_o attn(u_<=t)           single-head scaled dot product
//! g_t = h_t + W_2 tanh(W_1 h_t + b_1) + b_2
//! logits_t = W_out g_t + b_out          BOS and PAD are masked to -inf
//! ```
//!
//! The level enters only through the additive embedding, so a zeroed level
//! table makes the model blind to the requested level.

mod checkpoint;
mod decoder;
mod params;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use decoder::{
    draw_mask, embed_input, forward_step, sample_sequence, step_targets, teacher_forced_logprobs, teacher_forced_trace,
    Dropout, ForwardTrace, ImageContext, SampleMode, SampledSequence, StepDistribution, TeacherForced,
};
pub use params::{Gradients, ModelConfig, ParamGroup, PolicyParams};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK};
