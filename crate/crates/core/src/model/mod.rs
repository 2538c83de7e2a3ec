//! Word-level next-word-prediction model: embedding, one-layer LSTM and a
//! softmax output layer, with exact gradients and Adam.
//!
//! All parameters live in one flat `f64` vector. Layout, in order:
//!
//! | block     | shape              | index                          |
//! |-----------|--------------------|--------------------------------|
//! | embedding | `V × E`            | `w * E + k`                    |
//! | gates     | `4H × (E + H)`     | `(gate * H + j) * (E + H) + k` |
//! | gate bias | `4H`               | `gate * H + j`                 |
//! | output    | `V × H`            | `w * H + j`                    |
//! | out bias  | `V`                | `w`                            |
//!
//! Gates are ordered input, forget, candidate, output; gate weight rows
//! read the embedding first and the previous hidden state second. The
//! total is `V·E + 4H(E+H) + 4H + V·H + V`.

mod adam;
mod eval;
mod lstm;
mod train;

pub use adam::{Adam, AdamConfig};
pub use eval::{avg_log_likelihood, nwp_accuracy, Counts};
pub use lstm::{forward, loss_and_grad, windows, LossGrad};
pub use train::{pretrain, PretrainConfig, PretrainReport};

use crate::rng::{domain, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("sequence needs at least two tokens, got {0}")]
    TooShort(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("parameter vector has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint format {found} is not supported (expected {expected})")]
    Format { expected: u32, found: u32 },
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2000,
            embed_dim: 16,
            hidden_dim: 32,
            max_seq_len: 32,
        }
    }
}

/// Offsets of each block in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub embedding: usize,
    pub gates: usize,
    pub gate_bias: usize,
    pub output: usize,
    pub output_bias: usize,
    pub len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(ModelError::Config("dimensions must be positive".into()));
        }
        if self.max_seq_len < 2 {
            return Err(ModelError::Config("max_seq_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let (v, e, h) = (self.vocab_size, self.embed_dim, self.hidden_dim);
        let gates = v * e;
        let gate_bias = gates + 4 * h * (e + h);
        let output = gate_bias + 4 * h;
        let output_bias = output + v * h;
        Layout {
            embedding: 0,
            gates,
            gate_bias,
            output,
            output_bias,
            len: output_bias + v,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    config: ModelConfig,
    flat: Vec<f64>,
}

impl ModelParameters {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelParameters {
            config,
            flat: vec![0.0; config.param_count()],
        })
    }

    /// Uniform(−0.05, 0.05) everywhere except the forget-gate bias, which
    /// starts at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = stream(seed, &[domain::INIT]);
        for x in p.flat.iter_mut() {
            *x = rng.random_range(-0.05..0.05);
        }
        let l = config.layout();
        let h = config.hidden_dim;
        p.flat[l.gate_bias + h..l.gate_bias + 2 * h].fill(1.0);
        Ok(p)
    }

    pub fn from_flat(config: ModelConfig, flat: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if flat.len() != config.param_count() {
            return Err(ModelError::Shape {
                expected: config.param_count(),
                found: flat.len(),
            });
        }
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("parameters"));
        }
        Ok(ModelParameters { config, flat })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|x| x.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, &Checkpoint::from(self))?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        ck.into_params()
    }
}

/// On-disk form: `{"format_version": 1, "config": {...}, "params": [...]}`.
/// Floats are written in shortest round-trip form, so save/load is exact.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    config: ModelConfig,
    params: Vec<f64>,
}

impl From<&ModelParameters> for Checkpoint {
    fn from(p: &ModelParameters) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            config: p.config,
            params: p.flat.clone(),
        }
    }
}

impl Checkpoint {
    fn into_params(self) -> Result<ModelParameters> {
        if self.format_version != CHECKPOINT_FORMAT {
            return Err(ModelError::Format {
                expected: CHECKPOINT_FORMAT,
                found: self.format_version,
            });
        }
        ModelParameters::from_flat(self.config, self.params)
    }
}
