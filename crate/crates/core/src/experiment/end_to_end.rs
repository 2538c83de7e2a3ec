//! The desk-scale end-to-end comparison: pre-train on synthetic chat data
//! and on raw web text, fine-tune both with DP-FTRL on the same simulated
//! private population, then refine the synthetic corpus with the
//! fine-tuned model and retrain.

use super::config::ExperimentConfig;
use super::stages;
use super::Result;
use crate::corpus::{Corpus, Source, Vocabulary};
use crate::fl::{EvalResult, RoundMetrics};
use crate::model::ModelParameters;
use crate::par::Parallelism;
use crate::privacy::PrivacyReport;
use crate::refine::{RefineStats, Scored};
use crate::synth::{self, SynthStats};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One evaluated round of both fine-tuning runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub round: u64,
    pub chat_like_accuracy: f64,
    pub chat_like_std: f64,
    pub web_like_accuracy: f64,
    pub web_like_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineComparison {
    pub stats: RefineStats,
    pub sweep: Vec<RefineStats>,
    pub unrefined_examples: usize,
    pub refined_examples: usize,
    pub unrefined: EvalResult,
    pub refined: EvalResult,
    /// Mean of `fine_score - pre_score` over the scored candidates of each
    /// source.
    pub mean_score_shift: BTreeMap<Source, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub corpus_sizes: BTreeMap<String, usize>,
    pub synth_stats: SynthStats,
    pub vocab_size: usize,
    pub curves: Vec<CurveRow>,
    pub chat_like_round0: f64,
    pub web_like_round0: f64,
    pub web_like_final: f64,
    pub total_rounds: u64,
    /// First evaluated round at which the chat-like run reaches the
    /// web-like run's final accuracy.
    pub rounds_to_match: Option<u64>,
    pub privacy: PrivacyReport,
    pub refine: RefineComparison,
    #[serde(skip)]
    pub artifacts: Option<Box<Artifacts>>,
}

/// Large intermediate results, kept for callers that want to save them.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub vocab: Vocabulary,
    pub mix: Corpus,
    pub refined: Corpus,
    pub chat_like_model: ModelParameters,
    pub web_like_model: ModelParameters,
    pub fine_tuned_model: ModelParameters,
    pub refined_model: ModelParameters,
}

fn curve(metrics: &[RoundMetrics]) -> BTreeMap<u64, (f64, f64)> {
    metrics
        .iter()
        .filter_map(|m| Some((m.round, (m.eval_accuracy?, m.eval_std.unwrap_or(0.0)))))
        .collect()
}

pub fn run_end_to_end(
    cfg: &ExperimentConfig,
    par: Parallelism,
    progress: &mut dyn FnMut(&str),
) -> Result<EndToEnd> {
    let backend = stages::backend(cfg)?;
    progress("simulating public and private corpora");
    let raw = stages::simulate_raw(cfg);
    let private = stages::simulate_private(cfg);

    progress("synthesizing chats");
    let (generated, mut synth_stats) = stages::synthesize(cfg, backend.as_ref(), par)?;
    progress("filtering public corpus");
    let (filtered, s) = stages::filter(cfg, backend.as_ref(), &raw, par)?;
    synth_stats.merge(&s);
    progress("transforming filtered articles");
    let (transformed, s) = stages::transform(cfg, backend.as_ref(), &filtered, par)?;
    synth_stats.merge(&s);

    let vocab = stages::build_vocab(cfg, &[&raw, &generated]);
    let mix = synth::combine(&[filtered.clone(), generated.clone(), transformed.clone()], None, cfg.seed);
    let corpus_sizes: BTreeMap<String, usize> = [
        ("raw", raw.len()),
        ("private", private.len()),
        ("generated_chat", generated.len()),
        ("filtered", filtered.len()),
        ("transformed", transformed.len()),
        ("mix", mix.len()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();

    progress("pre-training on the synthetic mix");
    let (chat_model, _) = stages::pretrain_on(cfg, &vocab, &mix, par)?;
    progress("pre-training on raw web text");
    let (web_model, _) = stages::pretrain_on(cfg, &vocab, &raw, par)?;

    let (train, holdout) = stages::populations(cfg, &vocab, &private)?;
    let rounds = cfg.fl.rounds;
    progress("fine-tuning the chat-like model with DP-FTRL");
    let chat_run = stages::fl_run(cfg, chat_model.clone(), &train, &holdout, par, |m, _| {
        if let Some(acc) = m.eval_accuracy {
            progress(&format!("chat_like round {}/{rounds}: accuracy {acc:.4}", m.round));
        }
        Ok(())
    })?;
    progress("fine-tuning the web-like model with DP-FTRL");
    let web_run = stages::fl_run(cfg, web_model.clone(), &train, &holdout, par, |m, _| {
        if let Some(acc) = m.eval_accuracy {
            progress(&format!("web_like round {}/{rounds}: accuracy {acc:.4}", m.round));
        }
        Ok(())
    })?;

    let chat_curve = curve(&chat_run.outcome.metrics);
    let web_curve = curve(&web_run.outcome.metrics);
    let curves: Vec<CurveRow> = chat_curve
        .iter()
        .filter_map(|(&round, &(ca, cs))| {
            let &(wa, ws) = web_curve.get(&round)?;
            Some(CurveRow {
                round,
                chat_like_accuracy: ca,
                chat_like_std: cs,
                web_like_accuracy: wa,
                web_like_std: ws,
            })
        })
        .collect();
    let at = |c: &BTreeMap<u64, (f64, f64)>, r: u64| c.get(&r).map_or(f64::NAN, |v| v.0);
    let web_like_final = at(&web_curve, rounds);
    let rounds_to_match = chat_curve
        .iter()
        .find(|(_, &(acc, _))| acc >= web_like_final)
        .map(|(&r, _)| r);

    progress("refining the synthetic mix");
    let fine_model = chat_run.outcome.params.clone();
    let run = stages::refine(cfg, &chat_model, &fine_model, &vocab, &mix, par)?;
    let mut shifts: BTreeMap<Source, (f64, usize)> = BTreeMap::new();
    for (ex, s) in mix.iter().zip(&run.scores) {
        if let Scored::Ok(r) = s {
            let e = shifts.entry(ex.source()).or_default();
            e.0 += r.fine_score - r.pre_score;
            e.1 += 1;
        }
    }
    let mean_score_shift = shifts.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect();

    progress("retraining on the refined corpus");
    let (refined_model, _) = stages::pretrain_on(cfg, &vocab, &run.corpus, par)?;
    let unrefined = stages::evaluate(cfg, &chat_model, &holdout, par)?;
    let refined = stages::evaluate(cfg, &refined_model, &holdout, par)?;

    Ok(EndToEnd {
        corpus_sizes,
        synth_stats,
        vocab_size: vocab.size(),
        chat_like_round0: at(&chat_curve, 0),
        web_like_round0: at(&web_curve, 0),
        web_like_final,
        total_rounds: rounds,
        rounds_to_match,
        curves,
        privacy: chat_run.privacy,
        refine: RefineComparison {
            stats: run.stats,
            sweep: run.sweep,
            unrefined_examples: mix.len(),
            refined_examples: run.corpus.len(),
            unrefined,
            refined,
            mean_score_shift,
        },
        artifacts: Some(Box::new(Artifacts {
            vocab,
            mix,
            refined: run.corpus,
            chat_like_model: chat_model,
            web_like_model: web_model,
            fine_tuned_model: fine_model,
            refined_model,
        })),
    })
}

/// Accuracy-versus-round curves as CSV.
pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}
