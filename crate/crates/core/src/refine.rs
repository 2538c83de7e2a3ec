//! Corpus refinement with a pre-trained and a fine-tuned LM.
//!
//! Each example gets three numbers: its OOV rate, and its average
//! log-likelihood under both models. An example is kept when
//! `oov ≤ max_oov`, `fine ≥ min_fine_score` and, optionally,
//! `fine ≥ pre`. All comparisons are inclusive.
//!
//! Scores are natural-log average log-likelihoods per predicted token, so
//! they are never positive. `min_fine_score` is either a fixed value on that
//! scale or a percentile of the corpus's own fine scores.
//!
//! Refinement only reads the two model snapshots and the candidate corpus;
//! it takes no client population as input.

use crate::corpus::{conversation_body, tokenize, Corpus, Example, Source, Vocabulary};
use crate::model::{avg_log_likelihood, ModelParameters};
use crate::par::{self, Parallelism};
use crate::rng::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const SCORE_SCALE: &str = "natural-log average log-likelihood per predicted token";

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("model vocab sizes differ: pre {pre}, fine {fine}, vocabulary {vocab}")]
    VocabMismatch { pre: usize, fine: usize, vocab: usize },
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

pub type Result<T> = std::result::Result<T, RefineError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineScores {
    pub oov: f64,
    pub pre_score: f64,
    pub fine_score: f64,
}

/// Why an example could not be scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    NoTokens,
    TooShort,
    NonFinite,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::NoTokens => "no_tokens",
            Rejection::TooShort => "too_short",
            Rejection::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scored {
    Ok(RefineScores),
    Rejected(Rejection),
}

/// Lower bound on the fine-tuned score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinScore {
    Fixed(f64),
    /// Percentile in `[0, 100]` of the scored examples' fine scores, with
    /// linear interpolation between order statistics.
    Percentile(f64),
}

impl Default for MinScore {
    fn default() -> Self {
        MinScore::Percentile(40.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineThresholds {
    pub max_oov: f64,
    pub min_fine_score: MinScore,
    pub require_fine_ge_pre: bool,
}

impl Default for RefineThresholds {
    fn default() -> Self {
        RefineThresholds {
            max_oov: 0.6,
            min_fine_score: MinScore::default(),
            require_fine_ge_pre: true,
        }
    }
}

impl RefineThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_oov) {
            return Err(RefineError::Thresholds(format!("max_oov {} outside [0, 1]", self.max_oov)));
        }
        match self.min_fine_score {
            MinScore::Fixed(v) if v.is_nan() => Err(RefineError::Thresholds("min_fine_score is NaN".into())),
            MinScore::Percentile(p) if !(0.0..=100.0).contains(&p) => {
                Err(RefineError::Thresholds(format!("percentile {p} outside [0, 100]")))
            }
            _ => Ok(()),
        }
    }
}

/// Thresholds with the fine-score bound made concrete.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedThresholds {
    pub max_oov: f64,
    pub min_fine_score: f64,
    pub require_fine_ge_pre: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
}

impl ResolvedThresholds {
    pub fn fixed(&self) -> RefineThresholds {
        RefineThresholds {
            max_oov: self.max_oov,
            min_fine_score: MinScore::Fixed(self.min_fine_score),
            require_fine_ge_pre: self.require_fine_ge_pre,
        }
    }
}

/// The keep rule.
pub fn keep(s: &RefineScores, th: &ResolvedThresholds) -> bool {
    s.oov <= th.max_oov
        && s.fine_score >= th.min_fine_score
        && (!th.require_fine_ge_pre || s.fine_score >= s.pre_score)
}

/// Text the models see: chats without speaker markers, prose as is.
fn scoring_text(ex: &Example) -> String {
    if ex.source().is_chat() {
        let body = conversation_body(ex.text());
        if !body.is_empty() {
            return body;
        }
    }
    ex.text().to_owned()
}

#[derive(Clone, Copy)]
pub struct RefineModels<'a> {
    pub pre: &'a ModelParameters,
    pub fine: &'a ModelParameters,
    pub vocab: &'a Vocabulary,
}

impl RefineModels<'_> {
    fn check(&self) -> Result<()> {
        let (pre, fine, vocab) = (
            self.pre.config().vocab_size,
            self.fine.config().vocab_size,
            self.vocab.size(),
        );
        if pre != vocab || fine != vocab {
            return Err(RefineError::VocabMismatch { pre, fine, vocab });
        }
        Ok(())
    }
}

/// Short content hash identifying a checkpoint.
pub fn model_id(p: &ModelParameters) -> String {
    let bytes: Vec<u8> = p.flat().iter().flat_map(|x| x.to_le_bytes()).collect();
    sha256_hex(&bytes)[..16].to_owned()
}

pub fn score_example(models: &RefineModels<'_>, ex: &Example) -> Result<Scored> {
    models.check()?;
    score_unchecked(models, ex)
}

fn score_unchecked(models: &RefineModels<'_>, ex: &Example) -> Result<Scored> {
    let tok = tokenize(&scoring_text(ex), models.vocab);
    if tok.is_empty() {
        return Ok(Scored::Rejected(Rejection::NoTokens));
    }
    if tok.len() < 2 {
        return Ok(Scored::Rejected(Rejection::TooShort));
    }
    let oov = tok.oov_count as f64 / tok.len() as f64;
    let pre_score = avg_log_likelihood(models.pre, &tok.ids)?;
    let fine_score = avg_log_likelihood(models.fine, &tok.ids)?;
    if !pre_score.is_finite() || !fine_score.is_finite() {
        return Ok(Scored::Rejected(Rejection::NonFinite));
    }
    Ok(Scored::Ok(RefineScores { oov, pre_score, fine_score }))
}

/// Scores every example, in corpus order.
pub fn score_corpus(models: &RefineModels<'_>, corpus: &Corpus, par: Parallelism) -> Result<Vec<Scored>> {
    models.check()?;
    par::map(&corpus.examples, par, |ex| score_unchecked(models, ex))
        .into_iter()
        .collect()
}

/// Linear-interpolation percentile of `values` (need not be sorted).
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

pub fn resolve(th: &RefineThresholds, scores: &[Scored]) -> Result<ResolvedThresholds> {
    th.validate()?;
    let (min_fine_score, pct) = match th.min_fine_score {
        MinScore::Fixed(v) => (v, None),
        MinScore::Percentile(p) => {
            let fine: Vec<f64> = scores
                .iter()
                .filter_map(|s| match s {
                    Scored::Ok(r) => Some(r.fine_score),
                    Scored::Rejected(_) => None,
                })
                .collect();
            // Nothing scored: nothing can be kept anyway.
            (percentile(&fine, p).unwrap_or(f64::INFINITY), Some(p))
        }
    };
    Ok(ResolvedThresholds {
        max_oov: th.max_oov,
        min_fine_score,
        require_fine_ge_pre: th.require_fine_ge_pre,
        percentile: pct,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retention {
    pub kept: usize,
    pub total: usize,
}

impl Retention {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.kept as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineStats {
    pub thresholds: ResolvedThresholds,
    pub score_scale: String,
    pub overall: Retention,
    pub per_source: BTreeMap<Source, Retention>,
    pub rejected: BTreeMap<Rejection, usize>,
    pub pre_model: String,
    pub fine_model: String,
}

/// Keeps the examples whose scores pass `th`.
pub fn apply(
    corpus: &Corpus,
    scores: &[Scored],
    th: &ResolvedThresholds,
    models: &RefineModels<'_>,
) -> (Corpus, RefineStats) {
    assert_eq!(corpus.len(), scores.len(), "one score per example");
    let mut stats = RefineStats {
        thresholds: *th,
        score_scale: SCORE_SCALE.to_owned(),
        overall: Retention::default(),
        per_source: BTreeMap::new(),
        rejected: BTreeMap::new(),
        pre_model: model_id(models.pre),
        fine_model: model_id(models.fine),
    };
    let mut kept = Vec::new();
    for (ex, s) in corpus.iter().zip(scores) {
        let ok = match s {
            Scored::Ok(r) => keep(r, th),
            Scored::Rejected(why) => {
                *stats.rejected.entry(*why).or_default() += 1;
                false
            }
        };
        let r = stats.per_source.entry(ex.source()).or_default();
        r.total += 1;
        stats.overall.total += 1;
        if ok {
            r.kept += 1;
            stats.overall.kept += 1;
            kept.push(ex.clone());
        }
    }
    (Corpus::new(kept), stats)
}

pub fn filter_corpus(
    corpus: &Corpus,
    models: &RefineModels<'_>,
    th: &RefineThresholds,
    par: Parallelism,
) -> Result<(Corpus, RefineStats)> {
    let scores = score_corpus(models, corpus, par)?;
    let resolved = resolve(th, &scores)?;
    Ok(apply(corpus, &scores, &resolved, models))
}

/// Runs the keep rule once per fine-score bound, scoring only once.
pub fn sweep(
    corpus: &Corpus,
    models: &RefineModels<'_>,
    base: &RefineThresholds,
    bounds: &[MinScore],
    par: Parallelism,
) -> Result<Vec<(Corpus, RefineStats)>> {
    let scores = score_corpus(models, corpus, par)?;
    bounds
        .iter()
        .map(|&b| {
            let th = RefineThresholds { min_fine_score: b, ..*base };
            let resolved = resolve(&th, &scores)?;
            Ok(apply(corpus, &scores, &resolved, models))
        })
        .collect()
}
