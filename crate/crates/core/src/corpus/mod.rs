//! Text records, word-level tokenization, vocabulary construction and the
//! corpus-quality metrics (vocabulary coverage, OOV rate).

mod metrics;
mod split;
mod tokenize;
mod vocab;

pub use metrics::{oov_rate, vocab_coverage, vocab_coverage_texts};
pub use split::{conversation_body, parse_turns, split_sentences, split_turns, Turn};
pub use tokenize::{tokenize, words};
pub use vocab::{Vocabulary, OOV_TOKEN};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("example text is empty after normalization")]
    EmptyText,
    #[error("rate undefined for an empty token sequence")]
    EmptySequence,
    #[error("duplicate vocabulary word {0:?}")]
    DuplicateWord(String),
    #[error("vocabulary does not contain the OOV token {0:?}")]
    MissingOov(String),
    #[error("vocabulary file must start with {expected:?}, found {found:?}")]
    OovNotFirst { expected: String, found: String },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Where an example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Filtered,
    GeneratedChat,
    Transformed,
    Raw,
    PrivateSim,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Filtered,
        Source::GeneratedChat,
        Source::Transformed,
        Source::Raw,
        Source::PrivateSim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Filtered => "filtered",
            Source::GeneratedChat => "generated_chat",
            Source::Transformed => "transformed",
            Source::Raw => "raw",
            Source::PrivateSim => "private_sim",
        }
    }

    /// Chat-shaped sources are pre-processed turn by turn, prose by sentence.
    pub fn is_chat(self) -> bool {
        matches!(
            self,
            Source::GeneratedChat | Source::Transformed | Source::PrivateSim
        )
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One text record. The source tag is fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    text: String,
    source: Source,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Example {
    /// Trims `text`; fails if nothing is left.
    pub fn new(text: impl AsRef<str>, source: Source) -> Result<Self> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(CorpusError::EmptyText);
        }
        Ok(Example {
            text: text.to_owned(),
            source,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn source(&self) -> Source {
        self.source
    }
}

/// A token-id sequence together with its OOV count.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub ids: Vec<u32>,
    pub oov_count: usize,
}

impl TokenizedExample {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of next-word predictions the sequence supports.
    pub fn predictions(&self) -> usize {
        self.ids.len().saturating_sub(1)
    }
}

/// An ordered collection of examples, stored on disk as JSONL.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub examples: Vec<Example>,
}

impl Corpus {
    pub fn new(examples: Vec<Example>) -> Self {
        Corpus { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(Example::text)
    }

    /// Splits every example into training units: chats by turn, prose by
    /// sentence. Source tags and metadata carry over.
    pub fn training_units(&self) -> Corpus {
        let mut out = Vec::new();
        for ex in &self.examples {
            let parts = if ex.source.is_chat() {
                split_turns(&ex.text, ex.source)
            } else {
                split_sentences(&ex.text, ex.source)
            };
            for mut part in parts {
                for (k, v) in &ex.meta {
                    part.meta.entry(k.clone()).or_insert_with(|| v.clone());
                }
                out.push(part);
            }
        }
        Corpus::new(out)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Corpus> {
        let mut examples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Example =
                serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
            if ex.text.trim().is_empty() {
                return Err(CorpusError::EmptyText);
            }
            examples.push(ex);
        }
        Ok(Corpus { examples })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        for ex in &self.examples {
            serde_json::to_writer(&mut w, ex).map_err(|source| CorpusError::Json { line: 0, source })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl FromIterator<Example> for Corpus {
    fn from_iter<I: IntoIterator<Item = Example>>(iter: I) -> Self {
        Corpus::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;
    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_requires_text() {
        assert!(matches!(Example::new("  \n", Source::Raw), Err(CorpusError::EmptyText)));
        assert_eq!(Example::new(" hi ", Source::Raw).unwrap().text(), "hi");
    }

    #[test]
    fn jsonl_round_trip() {
        let corpus = Corpus::new(vec![
            Example::new("hello world", Source::Raw).unwrap(),
            Example::new("**Me:** hi\n**Mom:** hello", Source::GeneratedChat)
                .unwrap()
                .with_meta("age", "23"),
        ]);
        let mut buf = Vec::new();
        corpus.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"source\":\"raw\""));
        let back = Corpus::from_reader(&buf[..]).unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn jsonl_errors_carry_line() {
        let bad = "{\"text\":\"a\",\"source\":\"raw\"}\nnot json\n";
        match Corpus::from_reader(bad.as_bytes()) {
            Err(CorpusError::Json { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn training_units_split_by_source_kind() {
        let corpus = Corpus::new(vec![
            Example::new("One. Two! Three", Source::Filtered).unwrap(),
            Example::new("**Me:** hi\n**Mom:** hello", Source::GeneratedChat)
                .unwrap()
                .with_meta("conv", "7"),
        ]);
        let units = corpus.training_units();
        let texts: Vec<_> = units.texts().collect();
        assert_eq!(texts, ["One.", "Two!", "Three", "hi", "hello"]);
        assert_eq!(units.examples[4].meta.get("conv").map(String::as_str), Some("7"));
        assert_eq!(units.examples[4].source(), Source::GeneratedChat);
    }
}
