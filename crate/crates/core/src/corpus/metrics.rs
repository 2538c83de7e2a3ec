use super::{words, Corpus, CorpusError, Result, TokenizedExample, Vocabulary};
use std::collections::HashSet;

/// Fraction of tokens that are out of vocabulary.
pub fn oov_rate(ex: &TokenizedExample) -> Result<f64> {
    if ex.ids.is_empty() {
        return Err(CorpusError::EmptySequence);
    }
    Ok(ex.oov_count as f64 / ex.ids.len() as f64)
}

/// Fraction of non-OOV vocabulary words that occur at least once in the
/// corpus. A vocabulary holding only the OOV entry has coverage 0.
pub fn vocab_coverage(corpus: &Corpus, vocab: &Vocabulary) -> f64 {
    vocab_coverage_texts(corpus.texts(), vocab)
}

pub fn vocab_coverage_texts<'a>(texts: impl IntoIterator<Item = &'a str>, vocab: &Vocabulary) -> f64 {
    let real = vocab.size().saturating_sub(1);
    if real == 0 {
        return 0.0;
    }
    let oov = vocab.oov_id();
    let mut seen: HashSet<u32> = HashSet::new();
    for text in texts {
        for w in words(text) {
            let id = vocab.id(&w);
            if id != oov {
                seen.insert(id);
            }
        }
    }
    seen.len() as f64 / real as f64
}
