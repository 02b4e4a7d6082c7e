//! Rule-based sentence splitting.
//!
//! A boundary falls after `.`, `!` or `?` when the next characters are
//! whitespace followed by an uppercase letter. Abbreviations such as "Dr."
//! therefore end a sentence when a capitalized word follows them; this is a
//! known limitation of the rule and is kept for determinism.

use std::ops::Range;

/// Byte ranges of the sentences in `text`, leading and trailing whitespace
/// excluded. The gaps between consecutive ranges contain only whitespace.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();

    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j > i + 1 && j < chars.len() && chars[j].1.is_uppercase() {
                push_trimmed(text, start..pos + c.len_utf8(), &mut spans);
                start = chars[j].0;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let piece = &text[range.clone()];
    let lead = piece.len() - piece.trim_start().len();
    let trail = piece.len() - piece.trim_end().len();
    if lead + trail < piece.len() {
        out.push(range.start + lead..range.end - trail);
    }
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text).into_iter().map(|r| &text[r]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_sentences() {
        assert_eq!(split_sentences("A arrived. B left."), ["A arrived.", "B left."]);
    }

    #[test]
    fn no_punctuation() {
        assert_eq!(split_sentences("no punctuation"), ["no punctuation"]);
    }

    #[test]
    fn abbreviation_limit() {
        assert_eq!(split_sentences("Dr. Smith spoke."), ["Dr.", "Smith spoke."]);
    }

    #[test]
    fn requires_whitespace_and_uppercase() {
        assert_eq!(split_sentences("e.g. this. And that"), ["e.g. this.", "And that"]);
        assert_eq!(split_sentences("3.14 is pi!Really"), ["3.14 is pi!Really"]);
        assert_eq!(split_sentences("Why?\n\nBecause!  Yes."), ["Why?", "Because!", "Yes."]);
        assert!(split_sentences("   ").is_empty());
    }

    proptest! {
        #[test]
        fn gaps_are_whitespace(text in "[A-Za-z .!?\n]{0,80}") {
            let spans = sentence_spans(&text);
            let mut cursor = 0;
            for r in &spans {
                prop_assert!(text[cursor..r.start].trim().is_empty());
                prop_assert!(r.start < r.end);
                cursor = r.end;
            }
            prop_assert!(text[cursor..].trim().is_empty());
        }
    }
}
