//! One function per pipeline stage. Each is a pure function of the config
//! and its inputs; the CLI wraps them with file I/O and manifests.

use super::config::{BackendKind, ExperimentConfig};
use super::{ExperimentError, Result};
use crate::backend::{CompletionBackend, MockBackend, RemoteBackend, Style};
use crate::corpus::{tokenize, Corpus, Source, Vocabulary};
use crate::fl::{
    federated_eval, partition_private_corpus, run_training, split_holdout, ClientDataset, EvalResult,
    RoundMetrics, ServerState, TrainingOptions, TrainingOutcome,
};
use crate::model::{pretrain, ModelParameters, PretrainReport};
use crate::par::Parallelism;
use crate::privacy::{self, PrivacyReport, PrivacySpec};
use crate::refine::{self, MinScore, RefineModels, RefineStats, RefineThresholds, Scored};
use crate::rng::{derive_seed, domain};
use crate::synth::{self, SynthConfig, SynthStats};

const RAW_CORPUS: u64 = 1;
const PRIVATE_CORPUS: u64 = 2;

/// The completion backend named by the config.
pub fn backend(cfg: &ExperimentConfig) -> Result<Box<dyn CompletionBackend>> {
    match cfg.backend.kind {
        BackendKind::Mock => Ok(Box::new(MockBackend::profile(cfg.backend.style, cfg.backend.vocab_skew))),
        BackendKind::Remote => {
            let remote = cfg
                .backend
                .remote
                .clone()
                .ok_or_else(|| ExperimentError::Config("missing [backend.remote]".into()))?;
            Ok(Box::new(RemoteBackend::new(remote)?))
        }
    }
}

pub fn synth_config(cfg: &ExperimentConfig, par: Parallelism) -> SynthConfig {
    SynthConfig {
        sampling: cfg.sampling(),
        parallelism: par,
        receivers_per_assignment: cfg.synthesis.receivers_per_assignment,
        topics_per_receiver: cfg.synthesis.topics_per_receiver,
        transform_fraction: cfg.synthesis.transform_fraction,
    }
}

/// Simulated public web corpus, written in the web register with
/// `vocab_skew` of its content borrowed from chat.
pub fn simulate_raw(cfg: &ExperimentConfig) -> Corpus {
    let web = MockBackend::profile(Style::WebLike, cfg.backend.vocab_skew);
    let root = derive_seed(cfg.seed, &[domain::CORPUS, RAW_CORPUS]);
    (0..cfg.synthesis.raw_documents)
        .map(|i| web.simulate_document(root, i, Source::Raw))
        .collect()
}

/// Simulated private chats, drawn with natural word frequencies.
pub fn simulate_private(cfg: &ExperimentConfig) -> Corpus {
    let chat = MockBackend::profile(Style::ChatLike, 0.0);
    let root = derive_seed(cfg.seed, &[domain::CORPUS, PRIVATE_CORPUS]);
    (0..cfg.private.conversations)
        .map(|i| chat.simulate_document(root, i, Source::PrivateSim))
        .collect()
}

pub fn synthesize(
    cfg: &ExperimentConfig,
    backend: &dyn CompletionBackend,
    par: Parallelism,
) -> Result<(Corpus, SynthStats)> {
    let assignments = synth::sample_assignments(cfg.seed, cfg.synthesis.assignments);
    Ok(synth::generate_chats(backend, &assignments, &synth_config(cfg, par))?)
}

pub fn filter(
    cfg: &ExperimentConfig,
    backend: &dyn CompletionBackend,
    raw: &Corpus,
    par: Parallelism,
) -> Result<(Corpus, SynthStats)> {
    Ok(synth::filter_corpus(backend, raw, &synth_config(cfg, par))?)
}

pub fn transform(
    cfg: &ExperimentConfig,
    backend: &dyn CompletionBackend,
    filtered: &Corpus,
    par: Parallelism,
) -> Result<(Corpus, SynthStats)> {
    Ok(synth::transform_corpus(backend, filtered, &synth_config(cfg, par))?)
}

pub fn build_vocab(cfg: &ExperimentConfig, corpora: &[&Corpus]) -> Vocabulary {
    Vocabulary::build(corpora.iter().flat_map(|c| c.texts()), cfg.vocab.size)
}

/// Token sequences of the corpus's training units (turns or sentences),
/// dropping units too short to predict anything.
pub fn training_sequences(corpus: &Corpus, vocab: &Vocabulary) -> Vec<Vec<u32>> {
    corpus
        .training_units()
        .iter()
        .map(|ex| tokenize(ex.text(), vocab).ids)
        .filter(|ids| ids.len() >= 2)
        .collect()
}

/// Trains a fresh model on `corpus`.
pub fn pretrain_on(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    corpus: &Corpus,
    par: Parallelism,
) -> Result<(ModelParameters, PretrainReport)> {
    let seqs = training_sequences(corpus, vocab);
    let w0 = ModelParameters::init(cfg.model_config(vocab.size()), cfg.seed)?;
    Ok(pretrain(w0, &seqs, &cfg.pretrain_config(), par)?)
}

/// Training and holdout client populations.
pub fn populations(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    private: &Corpus,
) -> Result<(Vec<ClientDataset>, Vec<ClientDataset>)> {
    let pop = partition_private_corpus(
        private,
        vocab,
        cfg.private.clients,
        cfg.private.partition_skew,
        cfg.seed,
    )?;
    Ok(split_holdout(pop, cfg.private.holdout_clients))
}

pub fn privacy_spec(cfg: &ExperimentConfig) -> PrivacySpec {
    let t = cfg.fl.rounds;
    let s = cfg.fl.min_separation;
    PrivacySpec {
        total_rounds: t,
        max_participations: cfg
            .privacy
            .max_participations
            .unwrap_or_else(|| privacy::participation_bound(t, s)),
        min_separation: s,
        noise_multiplier: cfg.fl.noise_multiplier,
        target_delta: cfg.privacy.target_delta,
    }
}

/// The privacy report the config asks for: a direct ρ conversion when
/// `privacy.rho` is set, the tree-aggregation accountant otherwise.
pub fn account(cfg: &ExperimentConfig) -> Result<PrivacyReport> {
    Ok(match cfg.privacy.rho {
        Some(rho) => privacy::report_from_rho(rho, cfg.privacy.target_delta)?,
        None => privacy::report(&privacy_spec(cfg))?,
    })
}

pub struct FlRun {
    pub outcome: TrainingOutcome,
    pub privacy: PrivacyReport,
}

/// DP-FTRL fine-tuning from `w0`, with federated evaluation on `holdout`
/// every `fl.eval_every` rounds. The tracker's counts are audited against
/// the declared participation bound.
pub fn fl_run(
    cfg: &ExperimentConfig,
    w0: ModelParameters,
    train: &[ClientDataset],
    holdout: &[ClientDataset],
    par: Parallelism,
    on_round: impl FnMut(&RoundMetrics, &ServerState) -> crate::fl::Result<()>,
) -> Result<FlRun> {
    let spec = privacy_spec(cfg);
    privacy::feasibility(&spec)?;
    let opts = TrainingOptions {
        eval_every: cfg.fl.eval_every,
        holdout: (!holdout.is_empty()).then_some(holdout),
        eval: cfg.eval_config(),
    };
    let outcome = run_training(w0, train, &cfg.round_config(), &opts, par, on_round)?;
    privacy::audit(&spec, outcome.tracker.counts())?;
    Ok(FlRun {
        privacy: privacy::report(&spec)?,
        outcome,
    })
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    params: &ModelParameters,
    holdout: &[ClientDataset],
    par: Parallelism,
) -> Result<EvalResult> {
    Ok(federated_eval(params, holdout, &cfg.eval_config(), par)?)
}

pub struct RefineRun {
    pub corpus: Corpus,
    pub stats: RefineStats,
    /// Retention under each `refine.sweep` bound, in order.
    pub sweep: Vec<RefineStats>,
    pub scores: Vec<Scored>,
}

pub fn refine(
    cfg: &ExperimentConfig,
    pre: &ModelParameters,
    fine: &ModelParameters,
    vocab: &Vocabulary,
    corpus: &Corpus,
    par: Parallelism,
) -> Result<RefineRun> {
    let models = RefineModels { pre, fine, vocab };
    let base = cfg.thresholds();
    let scores = refine::score_corpus(&models, corpus, par)?;
    let (kept, stats) = refine::apply(corpus, &scores, &refine::resolve(&base, &scores)?, &models);
    let sweep = cfg
        .refine
        .sweep
        .iter()
        .map(|&v| {
            let th = RefineThresholds { min_fine_score: MinScore::Fixed(v), ..base };
            Ok(refine::apply(corpus, &scores, &refine::resolve(&th, &scores)?, &models).1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RefineRun { corpus: kept, stats, sweep, scores })
}
