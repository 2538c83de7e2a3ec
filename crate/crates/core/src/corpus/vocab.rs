use super::{words, CorpusError, Result};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

/// Marker used for the reserved out-of-vocabulary entry.
pub const OOV_TOKEN: &str = "<oov>";

/// A fixed word-level token table. Lookups are total: unknown words map
/// to [`Vocabulary::oov_id`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
    oov_id: u32,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit word list that contains
    /// `oov_token` somewhere; list order defines ids.
    pub fn from_words<I, S>(list: I, oov_token: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: Vec<String> = list.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(CorpusError::DuplicateWord(w.clone()));
            }
        }
        let oov_id = *index
            .get(oov_token)
            .ok_or_else(|| CorpusError::MissingOov(oov_token.to_owned()))?;
        Ok(Vocabulary { words, index, oov_id })
    }

    /// Frequency vocabulary over `texts`: the OOV marker at id 0 followed by
    /// the `size - 1` most frequent words (ties broken alphabetically). If
    /// the texts hold fewer distinct words, the vocabulary is smaller.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, size: usize) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for w in words(text) {
                if w != OOV_TOKEN {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let list = std::iter::once(OOV_TOKEN.to_owned())
            .chain(ranked.into_iter().take(size.saturating_sub(1)).map(|(w, _)| w));
        Self::from_words(list, OOV_TOKEN).expect("ranked words are distinct")
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(self.oov_id)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn oov_id(&self) -> u32 {
        self.oov_id
    }

    /// Number of entries, OOV included.
    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Reads the one-word-per-line format; line 1 must be the OOV marker.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let list: Vec<&str> = text.lines().collect();
        match list.first() {
            Some(&first) if first == OOV_TOKEN => {}
            other => {
                return Err(CorpusError::OovNotFirst {
                    expected: OOV_TOKEN.to_owned(),
                    found: other.map(|s| s.to_string()).unwrap_or_default(),
                })
            }
        }
        Self::from_words(list, OOV_TOKEN)
    }

    /// Writes one word per line. Only valid for vocabularies whose OOV
    /// entry sits at id 0.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.oov_id != 0 {
            return Err(CorpusError::OovNotFirst {
                expected: OOV_TOKEN.to_owned(),
                found: self.words[0].clone(),
            });
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for word in &self.words {
            writeln!(w, "{word}")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_and_missing_oov_rejected() {
        assert!(matches!(
            Vocabulary::from_words(["a", "a", "<oov>"], OOV_TOKEN),
            Err(CorpusError::DuplicateWord(_))
        ));
        assert!(matches!(
            Vocabulary::from_words(["a", "b"], OOV_TOKEN),
            Err(CorpusError::MissingOov(_))
        ));
    }

    #[test]
    fn build_ranks_by_frequency_then_alphabet() {
        let v = Vocabulary::build(["b a b c", "c b d"], 3);
        assert_eq!(v.words(), ["<oov>", "b", "c"]);
        assert_eq!(v.oov_id(), 0);
        assert_eq!(v.id("a"), 0);
        assert_eq!(v.id("c"), 2);
        let all = Vocabulary::build(["b a"], 100);
        assert_eq!(all.size(), 3);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(["the cat sat on the mat ."], 10);
        v.write(&path).unwrap();
        assert_eq!(Vocabulary::read(&path).unwrap(), v);
        std::fs::write(&path, "cat\n<oov>\n").unwrap();
        assert!(matches!(Vocabulary::read(&path), Err(CorpusError::OovNotFirst { .. })));
    }
}
