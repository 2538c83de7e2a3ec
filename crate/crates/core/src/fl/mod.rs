//! Cross-device federated learning with DP-FTRL tree aggregation.
//!
//! Each round samples clients that respect a minimum separation, runs
//! local SGD on each, clips the deltas, feeds their average to a binary
//! tree of Gaussian noise, and sets
//! `P̄ᵗ = β·P̄ᵗ⁻¹ + Pᵗ`, `wᵗ = w⁰ + η_s·P̄ᵗ`.

mod client;
mod clip;
mod eval;
mod partition;
mod server;
mod tracker;
mod tree;

pub use client::{client_update, ClientUpdate};
pub use clip::{clip_delta, l2_norm};
pub use eval::{federated_eval, EvalConfig, EvalResult};
pub use partition::{partition_private_corpus, split_holdout};
pub use server::{
    run_round, run_training, sample_clients, RoundMetrics, ServerState, TrainingOptions,
    TrainingOutcome,
};
pub use tracker::ParticipationTracker;
pub use tree::TreeAggregator;

use crate::corpus::TokenizedExample;
use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlError {
    #[error("round {round}: {eligible} eligible clients, {needed} needed")]
    InsufficientEligible { round: u64, eligible: usize, needed: usize },
    #[error("empty client population")]
    EmptyPopulation,
    #[error("client {0} has no examples")]
    EmptyClient(u64),
    #[error("duplicate client id {0}")]
    DuplicateClient(u64),
    #[error("invalid round config: {0}")]
    Config(String),
    #[error("cannot split {groups} conversation groups over {clients} clients")]
    TooFewGroups { groups: usize, clients: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlError>;

/// One simulated device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: u64,
    pub examples: Vec<TokenizedExample>,
    /// Number of predicted positions across the examples.
    pub weight: u64,
}

impl ClientDataset {
    pub fn new(client_id: u64, examples: Vec<TokenizedExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(FlError::EmptyClient(client_id));
        }
        let weight = examples.iter().map(|e| e.predictions() as u64).sum();
        Ok(ClientDataset {
            client_id,
            examples,
            weight,
        })
    }

    /// Token sequences long enough to predict at least one word.
    pub fn sequences(&self) -> Vec<&[u32]> {
        self.examples
            .iter()
            .filter(|e| e.len() >= 2)
            .map(|e| e.ids.as_slice())
            .collect()
    }
}

/// Checks that ids are unique and every client holds data.
pub fn validate_population(pop: &[ClientDataset]) -> Result<()> {
    if pop.is_empty() {
        return Err(FlError::EmptyPopulation);
    }
    let mut seen = std::collections::HashSet::new();
    for c in pop {
        if c.examples.is_empty() {
            return Err(FlError::EmptyClient(c.client_id));
        }
        if !seen.insert(c.client_id) {
            return Err(FlError::DuplicateClient(c.client_id));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    pub clients_per_round: usize,
    pub client_lr: f64,
    pub server_lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub rounds: u64,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    #[serde(default = "default_one")]
    pub min_separation: u64,
    #[serde(default = "default_one")]
    pub local_epochs: u64,
    #[serde(default = "default_batch")]
    pub local_batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_one() -> u64 {
    1
}
fn default_batch() -> usize {
    8
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            clients_per_round: 20,
            client_lr: 0.5,
            server_lr: 1.0,
            momentum: default_momentum(),
            rounds: 200,
            noise_multiplier: 0.0,
            clip_norm: 1.0,
            min_separation: 1,
            local_epochs: 1,
            local_batch_size: default_batch(),
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FlError::Config(m.to_owned()));
        if self.clients_per_round == 0 {
            return bad("clients_per_round must be at least 1");
        }
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return bad("clip_norm must be positive");
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return bad("noise_multiplier must be non-negative");
        }
        if self.min_separation == 0 {
            return bad("min_separation must be at least 1");
        }
        if self.local_batch_size == 0 {
            return bad("local_batch_size must be at least 1");
        }
        if !self.client_lr.is_finite() || !self.server_lr.is_finite() || !self.momentum.is_finite() {
            return bad("learning rates and momentum must be finite");
        }
        Ok(())
    }

    /// Per-node, per-coordinate noise std on averaged deltas: `z·C/m`.
    pub fn node_sigma(&self) -> f64 {
        self.noise_multiplier * self.clip_norm / self.clients_per_round as f64
    }
}
