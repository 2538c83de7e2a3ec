use super::lstm::loss_and_grad_sum;
use super::{Adam, AdamConfig, ModelError, ModelParameters, Result};
use crate::par::Parallelism;
use crate::rng::{domain, stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_eps() -> f64 {
    1e-9
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 1000,
            batch_size: 32,
            lr: default_lr(),
            eps: default_eps(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean training loss of each step's minibatch.
    pub losses: Vec<f64>,
    pub epochs: usize,
}

/// Centralized minibatch Adam training. Batches walk a seeded shuffle of
/// the sequences, reshuffled every epoch; sequences shorter than two
/// tokens are ignored.
pub fn pretrain<S: AsRef<[u32]> + Sync>(
    mut params: ModelParameters,
    seqs: &[S],
    cfg: &PretrainConfig,
    par: Parallelism,
) -> Result<(ModelParameters, PretrainReport)> {
    let usable: Vec<&[u32]> = seqs.iter().map(|s| s.as_ref()).filter(|s| s.len() >= 2).collect();
    if usable.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let batch_size = cfg.batch_size.clamp(1, usable.len());
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            eps: cfg.eps,
            ..AdamConfig::default()
        },
        params.flat().len(),
    );
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut report = PretrainReport::default();
    let mut batch: Vec<&[u32]> = Vec::with_capacity(batch_size);
    for _ in 0..cfg.steps {
        batch.clear();
        while batch.len() < batch_size {
            if cursor == order.len() {
                order = (0..usable.len()).collect();
                order.shuffle(&mut stream(cfg.seed, &[domain::PRETRAIN, report.epochs as u64]));
                report.epochs += 1;
                cursor = 0;
            }
            batch.push(usable[order[cursor]]);
            cursor += 1;
        }
        let lg = loss_and_grad_sum(&params, &batch, par)?;
        report.losses.push(lg.mean_loss());
        let grad = lg.mean_grad();
        adam.step(params.flat_mut(), &grad)?;
    }
    Ok((params, report))
}
