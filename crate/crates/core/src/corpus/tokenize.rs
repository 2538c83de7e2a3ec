use super::{TokenizedExample, Vocabulary};

/// Splits `text` into lowercase word tokens.
///
/// Letters (with apostrophes between letters, so "can't" stays whole) form
/// words, each maximal digit run is one token, and every other
/// non-whitespace character is a token of its own.
pub fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() {
            let start = i;
            i += 1;
            while i < chars.len() {
                if chars[i].is_alphabetic() {
                    i += 1;
                } else if chars[i] == '\''
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphabetic()
                {
                    i += 2;
                } else {
                    break;
                }
            }
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_lowercase().collect());
            i += 1;
        }
    }
    out
}

/// Maps `text` to vocabulary ids; unknown words become the OOV id.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenizedExample {
    let oov = vocab.oov_id();
    let ids: Vec<u32> = words(text).iter().map(|w| vocab.id(w)).collect();
    let oov_count = ids.iter().filter(|&&id| id == oov).count();
    TokenizedExample { ids, oov_count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hello_vocab() -> Vocabulary {
        Vocabulary::from_words(["hello", "world", "<oov>"], "<oov>").unwrap()
    }

    #[test]
    fn empty_text() {
        let t = tokenize("", &hello_vocab());
        assert!(t.ids.is_empty());
        assert_eq!(t.oov_count, 0);
    }

    #[test]
    fn in_vocab_words() {
        let t = tokenize("Hello world", &hello_vocab());
        assert_eq!(t.ids, vec![0, 1]);
        assert_eq!(t.oov_count, 0);
    }

    #[test]
    fn unknown_words_map_to_oov() {
        let t = tokenize("hello zzyzx world zzyzx", &hello_vocab());
        assert_eq!(t.ids, vec![0, 2, 1, 2]);
        assert_eq!(t.oov_count, 2);
        assert_eq!(t.oov_count as f64 / t.ids.len() as f64, 0.5);
    }

    #[test]
    fn punctuation_digits_and_contractions() {
        assert_eq!(
            words("Hey mom, I can't wait!! Back at 10:30."),
            ["hey", "mom", ",", "i", "can't", "wait", "!", "!", "back", "at", "10", ":", "30", "."]
        );
        assert_eq!(words("isn\u{2019}t 'quoted'"), ["isn't", "'", "quoted", "'"]);
        assert_eq!(words("3rd season"), ["3", "rd", "season"]);
    }

    proptest! {
        #[test]
        fn retokenizing_joined_tokens_is_identity(s in "\\PC{0,60}") {
            let once = words(&s);
            let twice = words(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
