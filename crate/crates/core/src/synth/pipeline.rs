use crate::backend::{CompletionBackend, CompletionRequest, CompletionResponse, FinishReason, SamplingParams};
use crate::corpus::{Corpus, Example, Source};
use crate::par::{self, Parallelism};
use crate::rng::{derive_seed, domain, sha256_hex, stream};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::parse::{is_chat, parse_list, parse_score};
use super::{PromptKind, PromptTemplate, SynthError, VariableAssignment};

const FILTER: u64 = 1;
const RECEIVERS: u64 = 2;
const TOPICS: u64 = 3;
const CONVERSATION: u64 = 4;
const TRANSFORM: u64 = 5;
const SUBSAMPLE: u64 = 6;
const COMBINE: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Sampling parameters; `seed` is the root from which per-job seeds
    /// are derived.
    pub sampling: SamplingParams,
    pub parallelism: Parallelism,
    /// Cap on receivers used per assignment (0 = all).
    pub receivers_per_assignment: usize,
    /// Cap on topics used per receiver (0 = all).
    pub topics_per_receiver: usize,
    pub transform_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sampling: SamplingParams::default(),
            parallelism: Parallelism::default(),
            receivers_per_assignment: 0,
            topics_per_receiver: 0,
            transform_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    fn job(&self, path: &[u64]) -> SamplingParams {
        SamplingParams {
            seed: derive_seed(self.sampling.seed, path),
            ..self.sampling
        }
    }
}

/// Counters for one stage. Every job lands in exactly one bucket;
/// `truncated` additionally flags responses cut at `max_tokens`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub jobs: u64,
    pub kept: u64,
    pub rejected: u64,
    pub unparseable: u64,
    pub skipped: u64,
    pub backend_errors: u64,
    pub truncated: u64,
}

impl StageStats {
    pub fn is_balanced(&self) -> bool {
        self.jobs == self.kept + self.rejected + self.unparseable + self.skipped + self.backend_errors
    }

    fn merge(&mut self, o: &StageStats) {
        self.jobs += o.jobs;
        self.kept += o.kept;
        self.rejected += o.rejected;
        self.unparseable += o.unparseable;
        self.skipped += o.skipped;
        self.backend_errors += o.backend_errors;
        self.truncated += o.truncated;
    }

    fn record<T>(&mut self, r: &Result<T, SynthError>) {
        self.jobs += 1;
        match r {
            Ok(_) => self.kept += 1,
            Err(SynthError::Unparseable(_)) => self.unparseable += 1,
            Err(SynthError::EmptyList | SynthError::EmptyInput) => self.skipped += 1,
            Err(SynthError::Backend(_)) => self.backend_errors += 1,
            Err(_) => self.rejected += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStats {
    pub stages: BTreeMap<String, StageStats>,
}

impl SynthStats {
    pub fn stage(&self, name: &str) -> StageStats {
        self.stages.get(name).copied().unwrap_or_default()
    }

    fn entry(&mut self, name: &str) -> &mut StageStats {
        self.stages.entry(name.to_owned()).or_default()
    }

    pub fn merge(&mut self, other: &SynthStats) {
        for (k, v) in &other.stages {
            self.entry(k).merge(v);
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.stages.values().all(StageStats::is_balanced)
    }

    /// Fails when a stage issued jobs and every one of them hit a backend
    /// error, which means the backend is unusable rather than flaky.
    fn check_backend(&self, first: Option<BackendFailure>) -> Result<(), SynthError> {
        match first {
            Some(e) if self.stages.values().all(|s| s.jobs == s.backend_errors) => Err(e.0),
            _ => Ok(()),
        }
    }
}

struct BackendFailure(SynthError);

fn call(
    backend: &dyn CompletionBackend,
    prompt: String,
    params: SamplingParams,
) -> Result<CompletionResponse, SynthError> {
    Ok(backend.complete(&CompletionRequest::new(prompt, params))?)
}

/// Asks whether `ex` is likely typed on a phone. Never alters the text.
pub fn filter_example(
    backend: &dyn CompletionBackend,
    ex: &Example,
    params: SamplingParams,
) -> Result<bool, SynthError> {
    let prompt = PromptTemplate::builtin(PromptKind::Filter).render_text(ex.text())?;
    let resp = call(backend, prompt, params)?;
    parse_score(&resp.text).ok_or(SynthError::Unparseable(resp.text))
}

pub fn generate_receivers(
    backend: &dyn CompletionBackend,
    a: &VariableAssignment,
    params: SamplingParams,
) -> Result<Vec<String>, SynthError> {
    let prompt = PromptTemplate::builtin(PromptKind::GenReceivers).render_assignment(a)?;
    list(call(backend, prompt, params)?)
}

pub fn generate_topics(
    backend: &dyn CompletionBackend,
    a: &VariableAssignment,
    params: SamplingParams,
) -> Result<Vec<String>, SynthError> {
    if a.receiver().is_none() {
        return Err(SynthError::ChainOrder("topics requested before receiver"));
    }
    let prompt = PromptTemplate::builtin(PromptKind::GenTopics).render_assignment(a)?;
    list(call(backend, prompt, params)?)
}

fn list(resp: CompletionResponse) -> Result<Vec<String>, SynthError> {
    let items = parse_list(&resp.text);
    if items.is_empty() {
        Err(SynthError::EmptyList)
    } else {
        Ok(items)
    }
}

/// Generates one conversation; the example's metadata records every
/// variable of `a`.
pub fn generate_conversation(
    backend: &dyn CompletionBackend,
    a: &VariableAssignment,
    params: SamplingParams,
) -> Result<Example, SynthError> {
    let (Some(receiver), Some(topic)) = (a.receiver(), a.topic()) else {
        return Err(SynthError::ChainOrder("conversation requested before receiver and topic"));
    };
    let prompt = PromptTemplate::builtin(PromptKind::GenConversation).render_assignment(a)?;
    let resp = call(backend, prompt, params)?;
    let ex = chat_example(&resp, Source::GeneratedChat)?;
    Ok(ex
        .with_meta("age", &a.age)
        .with_meta("gender", &a.gender)
        .with_meta("time", &a.time)
        .with_meta("day", &a.day)
        .with_meta("chat_app", &a.chat_app)
        .with_meta("receiver", receiver)
        .with_meta("topic", topic))
}

fn chat_example(resp: &CompletionResponse, source: Source) -> Result<Example, SynthError> {
    if resp.finish == FinishReason::Refused || !is_chat(&resp.text) {
        return Err(SynthError::NotAChat);
    }
    let mut ex = Example::new(&resp.text, source).map_err(|_| SynthError::NotAChat)?;
    if resp.finish == FinishReason::Length {
        ex.meta.insert("truncated".into(), "true".into());
    }
    Ok(ex)
}

/// Converts a filtered article into a chat. Empty articles are skipped
/// without a backend call.
pub fn transform_example(
    backend: &dyn CompletionBackend,
    ex: &Example,
    params: SamplingParams,
) -> Result<Example, SynthError> {
    if ex.source() != Source::Filtered {
        return Err(SynthError::WrongSource {
            expected: Source::Filtered,
            found: ex.source(),
        });
    }
    transform_text(backend, ex.text(), params)
}

fn transform_text(
    backend: &dyn CompletionBackend,
    text: &str,
    params: SamplingParams,
) -> Result<Example, SynthError> {
    if text.trim().is_empty() {
        return Err(SynthError::EmptyInput);
    }
    let prompt = PromptTemplate::builtin(PromptKind::Transform).render_text(text)?;
    let resp = call(backend, prompt, params)?;
    Ok(chat_example(&resp, Source::Transformed)?.with_meta("source_id", example_id(text)))
}

/// Short content hash identifying an example across files.
pub(crate) fn example_id(text: &str) -> String {
    sha256_hex(text.as_bytes())[..16].to_owned()
}

fn first_backend_error<T>(results: &[Result<T, SynthError>]) -> Option<BackendFailure> {
    results.iter().find_map(|r| match r {
        Err(e @ SynthError::Backend(_)) => Some(BackendFailure(e.clone())),
        _ => None,
    })
}

/// Runs the filter over `corpus`, keeping score-1 examples (retagged as
/// `filtered`, text untouched) in input order.
pub fn filter_corpus(
    backend: &dyn CompletionBackend,
    corpus: &Corpus,
    cfg: &SynthConfig,
) -> Result<(Corpus, SynthStats), SynthError> {
    let examples: Vec<&Example> = corpus.iter().collect();
    let results = par::map_range(examples.len(), cfg.parallelism, |i| {
        filter_example(backend, examples[i], cfg.job(&[domain::SYNTH, FILTER, i as u64]))
    });
    let mut stats = SynthStats::default();
    let st = stats.entry("filter");
    let mut kept = Vec::new();
    for (ex, r) in examples.iter().zip(&results) {
        st.jobs += 1;
        match r {
            Ok(true) => {
                st.kept += 1;
                let mut out = Example::new(ex.text(), Source::Filtered).expect("non-empty");
                out.meta = ex.meta.clone();
                out.meta.insert("source_id".into(), example_id(ex.text()));
                kept.push(out);
            }
            Ok(false) => st.rejected += 1,
            Err(SynthError::Unparseable(_)) => st.unparseable += 1,
            Err(SynthError::Backend(_)) => st.backend_errors += 1,
            Err(_) => st.skipped += 1,
        }
    }
    stats.check_backend(first_backend_error(&results))?;
    Ok((Corpus::new(kept), stats))
}

/// The full receiver → topic → conversation chain for each assignment.
/// Output is ordered by (assignment, receiver, topic) regardless of
/// parallelism.
pub fn generate_chats(
    backend: &dyn CompletionBackend,
    assignments: &[VariableAssignment],
    cfg: &SynthConfig,
) -> Result<(Corpus, SynthStats), SynthError> {
    let per = par::map_range(assignments.len(), cfg.parallelism, |i| {
        chain(backend, &assignments[i], i as u64, cfg)
    });
    let mut stats = SynthStats::default();
    let mut out = Vec::new();
    let mut first = None;
    for (examples, s, err) in per {
        out.extend(examples);
        stats.merge(&s);
        first = first.or(err);
    }
    stats.check_backend(first)?;
    Ok((Corpus::new(out), stats))
}

fn take<T>(v: Vec<T>, cap: usize) -> impl Iterator<Item = T> {
    let n = if cap == 0 { v.len() } else { cap.min(v.len()) };
    v.into_iter().take(n)
}

fn note<T>(r: &Result<T, SynthError>, first: &mut Option<BackendFailure>) {
    if let (None, Err(e @ SynthError::Backend(_))) = (&first, r) {
        *first = Some(BackendFailure(e.clone()));
    }
}

fn chain(
    backend: &dyn CompletionBackend,
    a: &VariableAssignment,
    idx: u64,
    cfg: &SynthConfig,
) -> (Vec<Example>, SynthStats, Option<BackendFailure>) {
    let mut stats = SynthStats::default();
    let mut out = Vec::new();
    let mut first = None;
    let receivers = generate_receivers(backend, a, cfg.job(&[domain::SYNTH, RECEIVERS, idx]));
    stats.entry("receivers").record(&receivers);
    note(&receivers, &mut first);
    let Ok(receivers) = receivers else {
        return (out, stats, first);
    };
    for (ri, receiver) in take(receivers, cfg.receivers_per_assignment).enumerate() {
        let with_r = a.with_receiver(receiver);
        let ri = ri as u64;
        let topics = generate_topics(backend, &with_r, cfg.job(&[domain::SYNTH, TOPICS, idx, ri]));
        stats.entry("topics").record(&topics);
        note(&topics, &mut first);
        let Ok(topics) = topics else { continue };
        for (ti, topic) in take(topics, cfg.topics_per_receiver).enumerate() {
            let full = with_r.with_topic(topic).expect("receiver is set");
            let params = cfg.job(&[domain::SYNTH, CONVERSATION, idx, ri, ti as u64]);
            let conv = generate_conversation(backend, &full, params);
            stats.entry("conversations").record(&conv);
            note(&conv, &mut first);
            if let Ok(ex) = conv {
                out.push(ex.with_meta("conv", format!("gen-{idx}-{ri}-{ti}")));
            }
        }
    }
    (out, stats, first)
}

/// Exactly `round(fraction * n)` examples chosen uniformly, in input order.
pub fn subsample(corpus: &Corpus, fraction: f64, seed: u64) -> Corpus {
    subsample_with(corpus, fraction, seed, SUBSAMPLE)
}

fn subsample_with(corpus: &Corpus, fraction: f64, seed: u64, salt: u64) -> Corpus {
    let n = corpus.len();
    let k = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut rng = stream(seed, &[domain::SYNTH, salt, n as u64]);
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    let all: Vec<&Example> = corpus.iter().collect();
    idx.into_iter().map(|i| all[i].clone()).collect()
}

/// Subsamples `cfg.transform_fraction` of `filtered` and converts each
/// selected article into a chat.
pub fn transform_corpus(
    backend: &dyn CompletionBackend,
    filtered: &Corpus,
    cfg: &SynthConfig,
) -> Result<(Corpus, SynthStats), SynthError> {
    let chosen = subsample(filtered, cfg.transform_fraction, cfg.sampling.seed);
    let examples: Vec<&Example> = chosen.iter().collect();
    let results = par::map_range(examples.len(), cfg.parallelism, |i| {
        transform_example(backend, examples[i], cfg.job(&[domain::SYNTH, TRANSFORM, i as u64]))
    });
    let mut stats = SynthStats::default();
    let first = first_backend_error(&results);
    let mut out = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        stats.entry("transform").record(&r);
        if let Ok(ex) = r {
            out.push(ex.with_meta("conv", format!("tr-{i}")));
        }
    }
    stats.check_backend(first)?;
    Ok((Corpus::new(out), stats))
}

/// Concatenates corpora in order. With `ratios`, corpus `i` contributes a
/// seeded subsample of `round(ratios[i] * len)` examples; without, all.
pub fn combine(corpora: &[Corpus], ratios: Option<&[f64]>, seed: u64) -> Corpus {
    let mut out = Vec::new();
    for (i, c) in corpora.iter().enumerate() {
        match ratios.and_then(|r| r.get(i)) {
            Some(&r) if r < 1.0 => {
                out.extend(subsample_with(c, r, seed, COMBINE + i as u64 * 16).iter().cloned());
            }
            _ => out.extend(c.iter().cloned()),
        }
    }
    Corpus::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, RecordedBackend, Style};

    fn chat_mock() -> MockBackend {
        MockBackend::profile(Style::ChatLike, 0.0)
    }

    fn web_corpus(n: u64) -> Corpus {
        let web = MockBackend::profile(Style::WebLike, 0.5);
        (0..n).map(|i| web.simulate_document(9, i, Source::Raw)).collect()
    }

    #[test]
    fn generated_chats_are_attributable_and_chain_ordered() {
        let cfg = SynthConfig {
            receivers_per_assignment: 2,
            topics_per_receiver: 2,
            ..Default::default()
        };
        let a = super::super::sample_assignments(1, 20);
        let (corpus, stats) = generate_chats(&chat_mock(), &a, &cfg).unwrap();
        assert!(stats.is_balanced());
        assert_eq!(stats.stage("conversations").kept as usize, corpus.len());
        assert_eq!(stats.stage("receivers").jobs, 20);
        for ex in corpus.iter() {
            assert!(ex.meta.contains_key("receiver") && ex.meta.contains_key("topic"));
            assert_eq!(ex.source(), Source::GeneratedChat);
        }
    }

    #[test]
    fn mock_conversations_always_accepted() {
        let cfg = SynthConfig::default();
        let mut kept = 0;
        let base = VariableAssignment::at(17).with_receiver("your best friend");
        for i in 0..1000u64 {
            let a = base.with_topic(format!("topic number {i}")).unwrap();
            if generate_conversation(&chat_mock(), &a, cfg.job(&[i])).is_ok() {
                kept += 1;
            }
        }
        assert_eq!(kept, 1000);
    }

    #[test]
    fn output_independent_of_parallelism() {
        let seq = SynthConfig {
            parallelism: Parallelism::Sequential,
            topics_per_receiver: 1,
            ..Default::default()
        };
        let par = SynthConfig {
            parallelism: Parallelism::Rayon,
            ..seq.clone()
        };
        let a = super::super::sample_assignments(2, 12);
        let m = chat_mock();
        assert_eq!(generate_chats(&m, &a, &seq).unwrap(), generate_chats(&m, &a, &par).unwrap());
        let raw = web_corpus(40);
        assert_eq!(filter_corpus(&m, &raw, &seq).unwrap(), filter_corpus(&m, &raw, &par).unwrap());
    }

    #[test]
    fn filter_selects_without_mutation() {
        let raw = web_corpus(60);
        let (kept, stats) = filter_corpus(&chat_mock(), &raw, &SynthConfig::default()).unwrap();
        assert!(stats.is_balanced());
        let originals: Vec<&str> = raw.texts().collect();
        for ex in kept.iter() {
            assert!(originals.contains(&ex.text()));
            assert_eq!(ex.source(), Source::Filtered);
        }
    }

    #[test]
    fn unparseable_and_errors_are_counted() {
        let ex = Example::new("some article", Source::Raw).unwrap();
        let prompt = PromptTemplate::builtin(PromptKind::Filter).render_text("some article").unwrap();
        let mut rec = RecordedBackend::new();
        rec.insert(&prompt, "maybe?");
        let other = Example::new("not recorded", Source::Raw).unwrap();
        let corpus = Corpus::new(vec![ex, other]);
        let (kept, stats) = filter_corpus(&rec, &corpus, &SynthConfig::default()).unwrap();
        assert!(kept.is_empty());
        let s = stats.stage("filter");
        assert_eq!((s.jobs, s.unparseable, s.backend_errors), (2, 1, 1));
    }

    #[test]
    fn all_backend_failures_is_an_error() {
        let corpus = web_corpus(3);
        assert!(matches!(
            filter_corpus(&RecordedBackend::new(), &corpus, &SynthConfig::default()),
            Err(SynthError::Backend(_))
        ));
    }

    #[test]
    fn transform_checks_source_and_links_back() {
        let raw = Example::new("A thing happened. Then another.", Source::Raw).unwrap();
        assert!(matches!(
            transform_example(&chat_mock(), &raw, SamplingParams::default()),
            Err(SynthError::WrongSource { .. })
        ));
        let f = Example::new("A thing happened. Then another.", Source::Filtered).unwrap();
        let t = transform_example(&chat_mock(), &f, SamplingParams::default()).unwrap();
        assert_eq!(t.source(), Source::Transformed);
        assert_eq!(t.meta["source_id"], example_id(f.text()));
        assert_eq!(
            transform_text(&RecordedBackend::new(), "  ", SamplingParams::default()),
            Err(SynthError::EmptyInput)
        );
    }

    #[test]
    fn subsample_takes_rounded_fraction_in_order() {
        let c = web_corpus(47);
        let s = subsample(&c, 0.2, 5);
        assert_eq!(s.len(), 9);
        let pos: Vec<usize> = s
            .iter()
            .map(|e| c.iter().position(|x| x == e).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, subsample(&c, 0.2, 5));
    }

    #[test]
    fn combine_sizes() {
        let a = web_corpus(5);
        let b = web_corpus(3);
        assert_eq!(combine(std::slice::from_ref(&a), None, 0), a);
        assert_eq!(combine(&[a.clone(), b.clone()], None, 0).len(), 8);
        assert_eq!(combine(&[a, b], Some(&[1.0, 1.0 / 3.0]), 0).len(), 6);
    }

    #[test]
    fn topics_need_receiver() {
        let a = VariableAssignment::at(0);
        assert!(matches!(
            generate_topics(&chat_mock(), &a, SamplingParams::default()),
            Err(SynthError::ChainOrder(_))
        ));
        assert!(matches!(
            generate_conversation(&chat_mock(), &a.with_receiver("x"), SamplingParams::default()),
            Err(SynthError::ChainOrder(_))
        ));
    }
}
