use super::{Example, Source};
use regex::Regex;
use std::sync::OnceLock;

/// One parsed chat turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
}

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // `**Me:** hi`, `**Me**: hi`, `Me: hi`. Labels are up to three words
    // starting with a letter.
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?:\*\*)?\s*([A-Za-z][A-Za-z0-9'\u{2019}.\-]*(?: [A-Za-z0-9'\u{2019}.\-]+){0,2})\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(.*)$",
        )
        .expect("static regex")
    })
}

fn match_marker(line: &str) -> Option<(&str, &str)> {
    let caps = marker().captures(line)?;
    let label = caps.get(1)?.as_str();
    let rest = caps.get(2).map_or("", |m| m.as_str());
    Some((label, rest.trim()))
}

/// Parses speaker-marked lines into turns. Lines without a marker
/// continue the current turn; text before the first marker is dropped, as
/// are turns with no text.
pub fn parse_turns(text: &str) -> Vec<Turn> {
    let mut turns: Vec<Turn> = Vec::new();
    let mut open = false;
    for line in text.lines() {
        if let Some((speaker, rest)) = match_marker(line) {
            turns.push(Turn {
                speaker: speaker.to_owned(),
                text: rest.to_owned(),
            });
            open = true;
        } else if open {
            let line = line.trim();
            if !line.is_empty() {
                let cur = turns.last_mut().expect("open turn");
                if !cur.text.is_empty() {
                    cur.text.push('\n');
                }
                cur.text.push_str(line);
            }
        }
    }
    turns.retain(|t| !t.text.is_empty());
    turns
}

/// The conversation text with speaker markers removed: non-blank lines
/// from the first marked line on, trimmed, newline-joined.
pub fn conversation_body(text: &str) -> String {
    let mut lines = Vec::new();
    let mut started = false;
    for line in text.lines() {
        let stripped = match match_marker(line) {
            Some((_, rest)) => {
                started = true;
                rest
            }
            None => line.trim(),
        };
        if started && !stripped.is_empty() {
            lines.push(stripped);
        }
    }
    lines.join("\n")
}

/// One example per chat turn, markers stripped, order preserved. Text with
/// no recognizable turn markers becomes a single example flagged with
/// `meta["unparsed_turns"] = "true"`.
pub fn split_turns(chat_text: &str, source: Source) -> Vec<Example> {
    if chat_text.trim().is_empty() {
        return Vec::new();
    }
    let turns = parse_turns(chat_text);
    if turns.is_empty() {
        return Example::new(chat_text, source)
            .map(|ex| vec![ex.with_meta("unparsed_turns", "true")])
            .unwrap_or_default();
    }
    turns
        .into_iter()
        .filter_map(|t| Example::new(&t.text, source).ok())
        .collect()
}

/// Splits prose at `.`, `!` or `?` followed by whitespace. Abbreviations
/// ("Dr. Smith") are split too.
pub fn split_sentences(text: &str, source: Source) -> Vec<Example> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = iter.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    if let Ok(ex) = Example::new(&text[start..end], source) {
                        out.push(ex);
                    }
                    start = end;
                }
            }
        }
    }
    if let Ok(ex) = Example::new(&text[start..], source) {
        out.push(ex);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE5_EXAMPLE1: &str = "**Me:** Hey mom, I'm having so much fun on vacation! I can't wait to come home and tell you all about it.
**Mom:** That's great to hear! I'm so glad you're enjoying yourself.
**Me:** I am! I've been swimming, sunbathing, and exploring the island. I've also made some new friends.
**Mom:** That sounds like a lot of fun! I'm sure you'll have some great stories to tell us when you get home.
**Me:** I know I will! I'm also looking forward to seeing you and dad again.
**Mom:** We're looking forward to seeing you too! Have a safe trip home.
**Me:** I will. Love you!
**Mom:** Love you too!";

    fn texts(xs: &[Example]) -> Vec<&str> {
        xs.iter().map(Example::text).collect()
    }

    #[test]
    fn two_turns() {
        let out = split_turns("**Me:** hi\n**Mom:** hello", Source::GeneratedChat);
        assert_eq!(texts(&out), ["hi", "hello"]);
    }

    #[test]
    fn empty_chat() {
        assert!(split_turns("", Source::GeneratedChat).is_empty());
    }

    #[test]
    fn eight_turn_conversation() {
        let turns = parse_turns(TABLE5_EXAMPLE1);
        assert_eq!(turns.len(), 8);
        assert_eq!(turns[1].speaker, "Mom");
        assert_eq!(turns[7].text, "Love you too!");
        assert_eq!(split_turns(TABLE5_EXAMPLE1, Source::GeneratedChat).len(), 8);
    }

    #[test]
    fn marker_variants_and_continuations() {
        let chat = "Therapist: Hi, how are you?\nClient: Not well.\nStill not well.\n**Best Friend**: ok";
        let turns = parse_turns(chat);
        assert_eq!(turns.len(), 3);
        assert_eq!(turns[0].speaker, "Therapist");
        assert_eq!(turns[1].text, "Not well.\nStill not well.");
        assert_eq!(turns[2].speaker, "Best Friend");
        assert_eq!(turns[2].text, "ok");
    }

    #[test]
    fn unmarked_text_is_flagged() {
        let out = split_turns("just some words without speakers", Source::Transformed);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].meta.get("unparsed_turns").map(String::as_str), Some("true"));
    }

    #[test]
    fn sentences() {
        assert_eq!(split_sentences("A. B! C?", Source::Filtered).len(), 3);
        assert_eq!(split_sentences("no terminal punctuation", Source::Filtered).len(), 1);
        assert_eq!(
            texts(&split_sentences("Hi there. Bye now. Ok", Source::Filtered)),
            ["Hi there.", "Bye now.", "Ok"]
        );
        assert_eq!(texts(&split_sentences("Wait?! Yes. 3.5 is fine", Source::Raw)), ["Wait?!", "Yes.", "3.5 is fine"]);
        assert!(split_sentences("  ", Source::Raw).is_empty());
    }

    proptest! {
        #[test]
        fn turns_concatenate_to_body(
            lines in proptest::collection::vec(
                (proptest::option::of("(Me|Mom|Friend|Best Friend)"), "[a-z ,.!?]{0,20}"),
                0..12,
            )
        ) {
            let chat: String = lines
                .iter()
                .map(|(spk, txt)| match spk {
                    Some(s) => format!("**{s}:** {txt}"),
                    None => txt.clone(),
                })
                .collect::<Vec<_>>()
                .join("\n");
            let joined = parse_turns(&chat)
                .into_iter()
                .map(|t| t.text)
                .collect::<Vec<_>>()
                .join("\n");
            prop_assert_eq!(joined, conversation_body(&chat));
        }
    }
}
