//! JSON checkpoints of parameters, optimizer moments, and generator state.
//!
//! Floats are written with shortest round-trip formatting and parsed back
//! exactly, so a save/load cycle is bit-identical.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

const FORMAT_VERSION: u32 = 1;

/// Position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// 128-bit word position, kept as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Serde(format!("bad rng word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub epoch: usize,
    pub params: ParamStore,
    pub adam: AdamState,
    pub rng: RngState,
    /// Caller-defined extras (training state, configuration echo).
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(epoch: usize, params: &ParamStore, adam: &AdamState, rng: &ChaCha8Rng, meta: serde_json::Value) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            epoch,
            params: params.clone(),
            adam: adam.clone(),
            rng: RngState::capture(rng),
            meta,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported checkpoint format {} (expected {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        ckpt.params.restore_grad_buffers();
        if !ckpt.adam.matches(&ckpt.params) {
            return Err(Error::Serde("optimizer state does not match parameters".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?).map_err(|e| match e {
            Error::Serde(m) => Error::Serde(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
