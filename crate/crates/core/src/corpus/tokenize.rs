//! Word tokenization and case folding.

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;

/// A word token with its position in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// Byte offsets `[start, end)` into the tokenized text.
    pub byte_span: (usize, usize),
}

/// Unicode default case folding, with an ASCII fast path.
pub fn case_fold(s: &str) -> String {
    if s.is_ascii() {
        s.to_ascii_lowercase()
    } else {
        caseless::default_case_fold_str(s)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-' | '\u{2010}')
}

/// Byte spans of the word tokens in `text`.
///
/// A token is a maximal run of letters and digits. Apostrophes and hyphens
/// are kept when they sit between two word characters ("don't", "two-spirit");
/// combining marks attach to the preceding word character.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut start: Option<usize> = None;
    let mut end = 0;

    while let Some((i, c)) = chars.next() {
        match start {
            None => {
                if is_word_char(c) {
                    start = Some(i);
                    end = i + c.len_utf8();
                }
            }
            Some(s) => {
                let inner_joiner =
                    is_joiner(c) && end == i && chars.peek().is_some_and(|&(_, n)| is_word_char(n));
                if is_word_char(c) || is_combining_mark(c) || inner_joiner {
                    end = i + c.len_utf8();
                } else {
                    spans.push((s, end));
                    start = None;
                }
            }
        }
    }
    if let Some(s) = start {
        spans.push((s, end));
    }
    spans
}

pub fn tokenize(text: &str) -> Vec<Token> {
    token_spans(text)
        .into_iter()
        .map(|(s, e)| {
            let surface = &text[s..e];
            Token {
                surface: surface.to_string(),
                normalized: case_fold(surface),
                byte_span: (s, e),
            }
        })
        .collect()
}

/// Case-folded tokens without span bookkeeping; the hot path for counting.
pub fn normalized_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    token_spans(text)
        .into_iter()
        .map(move |(s, e)| case_fold(&text[s..e]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.surface).collect()
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ... !").is_empty());
    }

    #[test]
    fn simple_sentence() {
        let toks = tokenize("He said they left.");
        let s: Vec<_> = toks.iter().map(|t| t.surface.as_str()).collect();
        let n: Vec<_> = toks.iter().map(|t| t.normalized.as_str()).collect();
        assert_eq!(s, ["He", "said", "they", "left"]);
        assert_eq!(n, ["he", "said", "they", "left"]);
        assert_eq!(toks[0].byte_span, (0, 2));
        assert_eq!(toks[3].byte_span, (13, 17));
    }

    #[test]
    fn slash_separates() {
        assert_eq!(surfaces("xe/xem pronouns"), ["xe", "xem", "pronouns"]);
    }

    #[test]
    fn internal_joiners() {
        assert_eq!(surfaces("two-spirit"), ["two-spirit"]);
        assert_eq!(surfaces("don't 'quoted' end-"), ["don't", "quoted", "end"]);
        assert_eq!(surfaces("they\u{2019}re"), ["they\u{2019}re"]);
        assert_eq!(surfaces("a--b"), ["a", "b"]);
        assert_eq!(surfaces("-x-"), ["x"]);
    }

    #[test]
    fn digits_and_unicode() {
        assert_eq!(surfaces("R2D2 met Zoë, 3 times"), ["R2D2", "met", "Zoë", "3", "times"]);
        let t = tokenize("STRASSE Straße");
        assert_eq!(t[0].normalized, t[1].normalized);
    }

    #[test]
    fn combining_marks_stay_in_token() {
        // "e" + COMBINING ACUTE ACCENT
        assert_eq!(surfaces("cafe\u{301} au lait"), ["cafe\u{301}", "au", "lait"]);
    }
}
