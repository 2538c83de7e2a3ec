//! Parsers for model responses.

use crate::corpus::parse_turns;

/// First standalone `0` or `1` in `text`: not part of a longer number or
/// word, and not the integer part of a decimal like `0.5`.
pub fn parse_score(text: &str) -> Option<bool> {
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c != '0' && c != '1' {
            continue;
        }
        let before_ok = i == 0 || !chars[i - 1].is_alphanumeric() && chars[i - 1] != '.';
        let after_ok = match chars.get(i + 1) {
            None => true,
            Some(n) if n.is_alphanumeric() => false,
            Some('.') | Some(',') => !chars.get(i + 2).is_some_and(|d| d.is_ascii_digit()),
            Some(_) => true,
        };
        if before_ok && after_ok {
            return Some(c == '1');
        }
    }
    None
}

/// Splits a list response into items. Accepts one item per line with
/// optional `1.`/`1)`/`-`/`*`/`•` markers, bold markers and quotes;
/// trailing periods are dropped. Duplicates are removed.
pub fn parse_list(text: &str) -> Vec<String> {
    let items = text.lines().filter_map(|line| {
        let mut s = line.trim();
        let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            let rest = &s[digits..];
            if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
                s = r;
            }
        } else if let Some(r) = s
            .strip_prefix('-')
            .or_else(|| s.strip_prefix('*'))
            .or_else(|| s.strip_prefix('•'))
        {
            s = r;
        }
        let s = s
            .trim()
            .trim_matches('*')
            .trim()
            .trim_matches(|c| c == '"' || c == '“' || c == '”')
            .trim()
            .trim_end_matches('.')
            .trim();
        (!s.is_empty()).then(|| s.to_owned())
    });
    dedup(items)
}

/// Drops repeated items, keeping first occurrences in order.
pub fn dedup(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// A response counts as a chat when it has at least two speaker turns.
pub fn is_chat(text: &str) -> bool {
    parse_turns(text).len() >= 2
}
