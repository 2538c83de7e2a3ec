use super::client::{client_update, ClientUpdate};
use super::eval::{federated_eval, EvalConfig};
use super::tracker::ParticipationTracker;
use super::tree::TreeAggregator;
use super::{validate_population, ClientDataset, FlError, Result, RoundConfig};
use crate::model::ModelParameters;
use crate::par::{self, Parallelism};
use crate::rng::{domain, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Server-side state of a DP-FTRL run.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub w0: ModelParameters,
    pub w: ModelParameters,
    /// Momentum-accumulated noisy prefix sums `P̄ᵗ`.
    pub momentum: Vec<f64>,
    pub tree: TreeAggregator,
    pub tracker: ParticipationTracker,
    pub round: u64,
}

impl ServerState {
    pub fn new(w0: ModelParameters, cfg: &RoundConfig) -> Self {
        let dim = w0.flat().len();
        ServerState {
            w: w0.clone(),
            w0,
            momentum: vec![0.0; dim],
            tree: TreeAggregator::new(dim, cfg.node_sigma(), cfg.seed),
            tracker: ParticipationTracker::new(cfg.min_separation),
            round: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub eligible: usize,
    pub selected: Vec<u64>,
    pub dropped: usize,
    /// Min, median and max client delta norms before clipping.
    pub norm_pre: [f64; 3],
    pub norm_post: [f64; 3],
    pub clipped: usize,
    pub noise_std: f64,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_std: Option<f64>,
}

fn quantiles(mut v: Vec<f64>) -> [f64; 3] {
    if v.is_empty() {
        return [0.0; 3];
    }
    v.sort_by(f64::total_cmp);
    [v[0], v[v.len() / 2], v[v.len() - 1]]
}

/// `m` ids drawn uniformly without replacement from `eligible` (taken in
/// ascending order) by a partial Fisher–Yates shuffle; returned sorted.
pub fn sample_clients(eligible: &[u64], m: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut pool = eligible.to_vec();
    pool.sort_unstable();
    let m = m.min(pool.len());
    for i in 0..m {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool.sort_unstable();
    pool
}

/// Runs round `t = state.round + 1` over `population`.
pub fn run_round(
    state: &mut ServerState,
    population: &[ClientDataset],
    cfg: &RoundConfig,
    par: Parallelism,
) -> Result<RoundMetrics> {
    let t = state.round + 1;
    let by_id: HashMap<u64, &ClientDataset> = population.iter().map(|c| (c.client_id, c)).collect();
    let mut eligible: Vec<u64> = population
        .iter()
        .map(|c| c.client_id)
        .filter(|&id| state.tracker.eligible(id, t))
        .collect();
    eligible.sort_unstable();
    let m = cfg.clients_per_round;
    if eligible.len() < m {
        return Err(FlError::InsufficientEligible {
            round: t,
            eligible: eligible.len(),
            needed: m,
        });
    }
    let selected = sample_clients(&eligible, m, &mut stream(cfg.seed, &[domain::CLIENT_SAMPLING, t]));
    let w = &state.w;
    let updates: Vec<Result<ClientUpdate>> =
        par::map(&selected, par, |id| client_update(w, by_id[id], cfg, t));
    state.tracker.record(&selected, t);

    let dim = state.w.flat().len();
    let mut sum = vec![0.0; dim];
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut losses = Vec::new();
    let mut dropped = 0;
    let mut clipped = 0;
    for u in updates {
        match u {
            Ok(u) => {
                for (s, d) in sum.iter_mut().zip(&u.delta) {
                    *s += d;
                }
                pre.push(u.norm);
                post.push(super::l2_norm(&u.delta));
                losses.push(u.loss);
                clipped += usize::from(u.clipped);
            }
            Err(FlError::Model(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    let inv_m = 1.0 / m as f64;
    for s in sum.iter_mut() {
        *s *= inv_m;
    }
    let p = state.tree.push(&sum);
    let beta = cfg.momentum;
    for (pbar, pt) in state.momentum.iter_mut().zip(&p) {
        *pbar = beta * *pbar + pt;
    }
    let eta = cfg.server_lr;
    for ((w, w0), pbar) in state.w.flat_mut().iter_mut().zip(state.w0.flat()).zip(&state.momentum) {
        *w = w0 + eta * pbar;
    }
    state.round = t;
    Ok(RoundMetrics {
        round: t,
        eligible: eligible.len(),
        selected,
        dropped,
        norm_pre: quantiles(pre),
        norm_post: quantiles(post),
        clipped,
        noise_std: cfg.node_sigma(),
        train_loss: if losses.is_empty() { 0.0 } else { losses.iter().sum::<f64>() / losses.len() as f64 },
        eval_accuracy: None,
        eval_std: None,
    })
}

/// Evaluation schedule for [`run_training`].
#[derive(Debug, Clone, Default)]
pub struct TrainingOptions<'a> {
    /// Evaluate before round 1, every `eval_every` rounds and after the
    /// last round; 0 disables evaluation.
    pub eval_every: u64,
    pub holdout: Option<&'a [ClientDataset]>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: ModelParameters,
    /// Per-round metrics; entry 0 is the pre-training evaluation when
    /// evaluation is enabled.
    pub metrics: Vec<RoundMetrics>,
    pub tracker: ParticipationTracker,
}

/// Runs `cfg.rounds` rounds from `w0`, calling `on_round` after each one
/// (and after the round-0 evaluation).
pub fn run_training(
    w0: ModelParameters,
    population: &[ClientDataset],
    cfg: &RoundConfig,
    opts: &TrainingOptions,
    par: Parallelism,
    mut on_round: impl FnMut(&RoundMetrics, &ServerState) -> Result<()>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    validate_population(population)?;
    let mut state = ServerState::new(w0, cfg);
    let mut metrics = Vec::new();
    let evaluate = |w: &ModelParameters, m: &mut RoundMetrics| -> Result<()> {
        if let Some(h) = opts.holdout {
            let r = federated_eval(w, h, &opts.eval, par)?;
            m.eval_accuracy = Some(r.mean);
            m.eval_std = Some(r.std);
        }
        Ok(())
    };
    if opts.eval_every > 0 && opts.holdout.is_some() {
        let mut m0 = RoundMetrics::default();
        evaluate(&state.w, &mut m0)?;
        on_round(&m0, &state)?;
        metrics.push(m0);
    }
    for t in 1..=cfg.rounds {
        let mut m = run_round(&mut state, population, cfg, par)?;
        if opts.eval_every > 0 && (t % opts.eval_every == 0 || t == cfg.rounds) {
            evaluate(&state.w, &mut m)?;
        }
        on_round(&m, &state)?;
        metrics.push(m);
    }
    Ok(TrainingOutcome {
        params: state.w,
        metrics,
        tracker: state.tracker,
    })
}
