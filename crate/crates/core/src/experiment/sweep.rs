//! Grid sweep over pre-training optimizer settings.

use super::config::ExperimentConfig;
use super::{stages, Result};
use crate::corpus::{Corpus, Vocabulary};
use crate::model::{nwp_accuracy, pretrain, ModelParameters, PretrainConfig};
use crate::par::Parallelism;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lr: f64,
    pub eps: f64,
    pub final_loss: f64,
    pub eval_accuracy: f64,
}

/// Every `(lr, eps)` pair of the configured grid, lr-major.
pub fn pretrain_grid(cfg: &ExperimentConfig) -> Vec<PretrainConfig> {
    let base = cfg.pretrain_config();
    cfg.sweep
        .lr
        .iter()
        .flat_map(|&lr| cfg.sweep.eps.iter().map(move |&eps| PretrainConfig { lr, eps, ..base }))
        .collect()
}

/// Trains one model per grid point on `train` and scores it on `eval`.
pub fn sweep_pretrain(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    train: &Corpus,
    eval: &Corpus,
    par: Parallelism,
) -> Result<Vec<SweepPoint>> {
    let train_seqs = stages::training_sequences(train, vocab);
    let eval_seqs = stages::training_sequences(eval, vocab);
    let w0 = ModelParameters::init(cfg.model_config(vocab.size()), cfg.seed)?;
    pretrain_grid(cfg)
        .into_iter()
        .map(|pc| {
            let (w, report) = pretrain(w0.clone(), &train_seqs, &pc, par)?;
            Ok(SweepPoint {
                lr: pc.lr,
                eps: pc.eps,
                final_loss: report.losses.last().copied().unwrap_or(f64::NAN),
                eval_accuracy: nwp_accuracy(&w, &eval_seqs, par)?.accuracy(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_full_product() {
        let grid = pretrain_grid(&ExperimentConfig::default());
        assert_eq!(grid.len(), 9);
        assert_eq!((grid[0].lr, grid[0].eps), (1e-4, 1e-7));
        assert_eq!((grid[8].lr, grid[8].eps), (1e-2, 1e-9));
    }
}
