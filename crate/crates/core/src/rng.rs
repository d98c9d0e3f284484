//! Seeded randomness.
//!
//! Every run derives all of its randomness from one `u64` seed. Each
//! subsystem gets its own ChaCha8 stream of that seed, so adding draws in
//! one subsystem never shifts another:
//!
//! | stream | subsystem                                   |
//! |--------|---------------------------------------------|
//! | 1      | synthetic corpus generation                 |
//! | 2      | train/val/test split                        |
//! | 3      | parameter initialization                    |
//! | 4      | cross-entropy phase (shuffling, dropout)    |
//! | 5      | reinforcement phase (levels, sampling, dropout) |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Corpus = 1,
    Split = 2,
    Init = 3,
    CrossEntropy = 4,
    Reinforce = 5,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Serializable position of a ChaCha8 generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Format(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Format("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Format(format!("rng word_pos: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}
