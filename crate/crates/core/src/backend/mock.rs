use super::grammar::{chat_content_words, draw_index, web_content_words, RECEIVERS};
use super::{
    BackendError, CompletionBackend, CompletionRequest, CompletionResponse, FinishReason, Grammar,
    WordDraw,
};
use crate::corpus::{split_sentences, words, Example, Source};
use crate::rng::{derive_seed, domain, hash_bytes, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::sync::OnceLock;

use super::grammar::Style;

/// Deterministic stand-in for an instruction-tuned LLM.
///
/// The response to a request depends only on `(prompt, params)`; the RNG
/// is seeded from a hash of both, so call order and concurrency never
/// matter. Prompt families are recognized by their instruction text.
#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    grammar: Grammar,
    /// Std of the Gaussian perturbation applied to slot log-weights before
    /// top-k/temperature sampling.
    pub jitter: f64,
}

const FILTER_KEY: &str = "Determine whether the following topic is likely to be discussed";
const RECEIVERS_KEY: &str = "Generate a list of potential message receivers";
const TOPICS_KEY: &str = "Generate a list of potential message topics";
const CONVERSATION_KEY: &str = "Generate the conversation between you and your message receiver";
const TRANSFORM_KEY: &str = "Convert the following article to a conversation";

impl MockBackend {
    /// A backend whose open-ended output follows `style`; `vocab_skew`
    /// controls how much web-register content borrows chat words.
    pub fn profile(style: Style, vocab_skew: f64) -> Self {
        MockBackend {
            grammar: Grammar::new(style, vocab_skew),
            jitter: 1.0,
        }
    }

    pub fn style(&self) -> Style {
        self.grammar.style
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn mode(req: &CompletionRequest, jitter: f64) -> WordDraw {
        WordDraw::Llm {
            top_k: req.params.top_k as usize,
            temperature: req.params.temperature,
            jitter,
        }
    }

    fn respond(&self, rng: &mut ChaCha8Rng, req: &CompletionRequest) -> String {
        let prompt = req.prompt.as_str();
        let mode = Self::mode(req, self.jitter);
        if prompt.starts_with(FILTER_KEY) {
            filter_response(rng, body_after_instruction(prompt))
        } else if prompt.contains(RECEIVERS_KEY) {
            let n = 3 + rng.random_range(0..4);
            let items: Vec<String> = (0..n)
                .map(|_| RECEIVERS[draw_index(rng, RECEIVERS.len(), mode)].to_owned())
                .collect();
            list_response(rng, &items)
        } else if prompt.contains(TOPICS_KEY) {
            let n = 3 + rng.random_range(0..4);
            let items: Vec<String> = (0..n).map(|_| self.grammar.topic(rng, mode)).collect();
            list_response(rng, &items)
        } else if prompt.contains(CONVERSATION_KEY) {
            let receiver = between(prompt, "to message ", " on your mobile phone").unwrap_or("someone");
            let topic = between(prompt, "following topic: ", ". Generate the conversation");
            let turns = 2 + rng.random_range(0..7);
            self.grammar
                .conversation(rng, mode, "Me", &speaker_label(receiver), topic, turns)
        } else if prompt.starts_with(TRANSFORM_KEY) {
            self.transform(rng, mode, body_after_instruction(prompt))
        } else {
            let sentences = 2 + rng.random_range(0..4);
            self.grammar.paragraph(rng, mode, sentences)
        }
    }

    fn transform(&self, rng: &mut ChaCha8Rng, mode: WordDraw, article: &str) -> String {
        let sentences: Vec<String> = split_sentences(article, Source::Filtered)
            .into_iter()
            .map(|e| e.text().to_owned())
            .collect();
        let pairs = sentences.len().clamp(1, 5);
        let mut lines = Vec::with_capacity(pairs * 2);
        for i in 0..pairs {
            let detail = sentences
                .get(i)
                .cloned()
                .unwrap_or_else(|| self.grammar.sentence(rng, mode));
            let opener = if i == 0 { "Hey, did you hear? " } else { "" };
            lines.push(format!("**Me:** {opener}{detail}"));
            lines.push(format!("**Friend:** {}", self.grammar.sentence(rng, mode)));
        }
        lines.join("\n")
    }

    /// Simulates one document in this backend's own register, drawn with
    /// natural (untempered) word frequencies. The chat register yields a
    /// conversation with `topic_key` metadata; the web register a paragraph.
    pub fn simulate_document(&self, root_seed: u64, index: u64, source: Source) -> Example {
        let mut rng = stream(root_seed, &[domain::CORPUS, index]);
        let mode = WordDraw::Natural;
        match self.grammar.style {
            Style::ChatLike => {
                let receiver = RECEIVERS[draw_index(&mut rng, RECEIVERS.len(), mode)];
                let topic = self.grammar.topic(&mut rng, mode);
                let key = topic_key(&topic);
                let turns = 2 + rng.random_range(0..7);
                let text = self.grammar.conversation(
                    &mut rng,
                    mode,
                    "Me",
                    &speaker_label(receiver),
                    Some(&topic),
                    turns,
                );
                Example::new(text, source)
                    .expect("conversation is non-empty")
                    .with_meta("conv", index.to_string())
                    .with_meta("topic_key", key)
            }
            Style::WebLike => {
                let sentences = 3 + rng.random_range(0..6);
                let text = self.grammar.paragraph(&mut rng, mode, sentences);
                Example::new(text, source)
                    .expect("paragraph is non-empty")
                    .with_meta("doc", index.to_string())
            }
        }
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.params.validate()?;
        let seed = derive_seed(req.params.seed, &[domain::MOCK, hash_bytes(req.prompt.as_bytes())]);
        let mut rng = stream(seed, &[]);
        let text = self.respond(&mut rng, req);
        Ok(truncate(text, req.params.max_tokens as usize))
    }

    fn name(&self) -> String {
        format!("mock:{}:skew={}", self.grammar.style.as_str(), self.grammar.vocab_skew)
    }
}

fn truncate(text: String, max_tokens: usize) -> CompletionResponse {
    let count = text.split_whitespace().count();
    if count <= max_tokens {
        return CompletionResponse::stop(text);
    }
    // Cut at the start of the first token past the limit.
    let mut seen = 0;
    let mut in_token = false;
    let mut cut = text.len();
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            in_token = true;
            if seen == max_tokens {
                cut = i;
                break;
            }
            seen += 1;
        }
    }
    CompletionResponse {
        text: text[..cut].trim_end().to_owned(),
        finish: FinishReason::Length,
    }
}

fn body_after_instruction(prompt: &str) -> &str {
    prompt.split_once('\n').map_or("", |(_, rest)| rest)
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = s.find(start)? + start.len();
    let len = s[from..].find(end)?;
    Some(&s[from..from + len])
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// "your best friend" → "Friend".
fn speaker_label(receiver: &str) -> String {
    capitalize(receiver.split_whitespace().last().unwrap_or("Friend"))
}

fn topic_key(topic: &str) -> String {
    static NOUNS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    let nouns = NOUNS.get_or_init(|| super::grammar::chat_nouns().iter().copied().collect());
    words(topic)
        .into_iter()
        .find(|w| nouns.contains(w.as_str()))
        .unwrap_or_else(|| "none".to_owned())
}

fn list_response(rng: &mut ChaCha8Rng, items: &[String]) -> String {
    let style = rng.random_range(0..3);
    items
        .iter()
        .enumerate()
        .map(|(i, item)| match style {
            0 => format!("{}. {item}", i + 1),
            1 => format!("- {item}"),
            _ => format!("* {item}"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn filter_response(rng: &mut ChaCha8Rng, article: &str) -> String {
    static SETS: OnceLock<(HashSet<&'static str>, HashSet<&'static str>)> = OnceLock::new();
    let (chat, web) = SETS.get_or_init(|| {
        (
            chat_content_words().into_iter().collect(),
            web_content_words().into_iter().collect(),
        )
    });
    let (mut c, mut w) = (0usize, 0usize);
    for tok in words(article) {
        if chat.contains(tok.as_str()) {
            c += 1;
        } else if web.contains(tok.as_str()) {
            w += 1;
        }
    }
    let share = if c + w == 0 { 0.5 } else { c as f64 / (c + w) as f64 };
    let digit = if rng.random::<f64>() < share * share { 1 } else { 0 };
    match rng.random_range(0..3) {
        0 => format!("{digit}"),
        1 => format!("Score: {digit}"),
        _ => format!("{digit}\nThe topic is {} likely to come up in chats.", if digit == 1 { "very" } else { "not" }),
    }
}
