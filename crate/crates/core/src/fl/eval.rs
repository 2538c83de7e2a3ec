use super::server::sample_clients;
use super::tracker::ParticipationTracker;
use super::{ClientDataset, FlError, Result};
use crate::model::{nwp_accuracy, Counts, ModelParameters};
use crate::par::{self, Parallelism};
use crate::rng::{domain, stream};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_runs")]
    pub runs: u64,
    pub rounds: u64,
    pub clients_per_round: usize,
    #[serde(default = "default_sep")]
    pub min_separation: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_runs() -> u64 {
    3
}
fn default_sep() -> u64 {
    1
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            runs: default_runs(),
            rounds: 5,
            clients_per_round: 20,
            min_separation: default_sep(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    /// Sample standard deviation across runs (0 for a single run).
    pub std: f64,
    pub runs: Vec<f64>,
    pub counts: Vec<Counts>,
}

/// Federated NWP accuracy. Each run samples `min(m, eligible)` devices per
/// evaluation round under its own participation tracker and pools the
/// correct/total counts of every sampled device.
pub fn federated_eval(
    w: &ModelParameters,
    population: &[ClientDataset],
    cfg: &EvalConfig,
    par: Parallelism,
) -> Result<EvalResult> {
    if population.is_empty() {
        return Err(FlError::EmptyPopulation);
    }
    let mut ids: Vec<u64> = population.iter().map(|c| c.client_id).collect();
    ids.sort_unstable();
    let runs = cfg.runs.max(1);
    let mut schedule: Vec<Vec<u64>> = Vec::new();
    for r in 0..runs {
        let mut tracker = ParticipationTracker::new(cfg.min_separation);
        let mut chosen = Vec::new();
        for e in 1..=cfg.rounds.max(1) {
            let eligible: Vec<u64> = ids.iter().copied().filter(|&c| tracker.eligible(c, e)).collect();
            let mut rng = stream(cfg.seed, &[domain::EVAL_SAMPLING, r, e]);
            let picked = sample_clients(&eligible, cfg.clients_per_round.max(1), &mut rng);
            tracker.record(&picked, e);
            chosen.extend(picked);
        }
        schedule.push(chosen);
    }
    // Each device's counts depend only on the model and its data.
    let needed: Vec<u64> = schedule.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let by_id: BTreeMap<u64, &ClientDataset> = population.iter().map(|c| (c.client_id, c)).collect();
    let counts = par::map(&needed, par, |id| nwp_accuracy(w, &by_id[id].sequences(), Parallelism::Sequential));
    let mut table = BTreeMap::new();
    for (id, c) in needed.iter().zip(counts) {
        table.insert(*id, c?);
    }
    let per_run: Vec<Counts> = schedule
        .iter()
        .map(|ids| ids.iter().map(|id| table[id]).sum())
        .collect();
    let accs: Vec<f64> = per_run.iter().map(Counts::accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let std = if accs.len() > 1 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(EvalResult {
        mean,
        std,
        runs: accs,
        counts: per_run,
    })
}
