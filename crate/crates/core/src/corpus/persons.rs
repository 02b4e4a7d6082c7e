//! Person-mention detection.
//!
//! The built-in detector is a capitalization heuristic standing in for a
//! named-entity tagger. A remote tagger can be plugged in through the
//! [`PersonDetector`] trait (see `probe::ServiceClient`).

use thiserror::Error;

use super::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("person tagger unreachable: {0}")]
    Unreachable(String),
    #[error("person tagger failed: {0}")]
    Failed(String),
}

pub trait PersonDetector: Send + Sync {
    /// Number of distinct person-mention spans in `sentence`.
    fn count_persons(&self, sentence: &str) -> Result<usize, DetectError>;
}

const HONORIFICS: &[&str] = &[
    "mr", "mrs", "ms", "mx", "miss", "dr", "prof", "sir", "dame", "lord", "lady", "rev", "st",
];

// Capitalized words that are never names on their own: they open sentences
// or titles far more often than they refer to people.
const FUNCTION_WORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "although", "an", "and", "as", "at",
    "because", "before", "both", "but", "by", "during", "each", "em", "every", "ey", "for",
    "from", "he", "her", "here", "hers", "him", "hir", "his", "how", "however", "i", "if",
    "in", "into", "it", "its", "later", "many", "me", "meanwhile", "most", "my", "no", "not",
    "of", "on", "once", "one", "or", "our", "she", "since", "so", "some", "still", "that",
    "the", "their", "them", "then", "there", "these", "they", "this", "those", "though",
    "to", "today", "tomorrow", "two", "upon", "us", "we", "what", "when", "where", "which",
    "while", "who", "why", "with", "xe", "xem", "xey", "xir", "yesterday", "yet", "you",
    "your", "ze", "zem", "zey", "zir",
];

/// Counts maximal runs of capitalized name-like tokens.
///
/// Tokens in a run are separated only by whitespace, except that an
/// honorific may be followed by a period ("Mr. Smith"). Capitalized function
/// words (articles, pronouns, conjunctions, ...) never belong to a run, so a
/// sentence-initial "The" or "They" does not count while a sentence-initial
/// "Alice" does.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicDetector;

impl HeuristicDetector {
    pub fn person_spans(&self, sentence: &str) -> Vec<(usize, usize)> {
        let mut spans: Vec<(usize, usize)> = Vec::new();
        let mut current: Option<(usize, usize, bool)> = None; // start, end, last token is honorific

        for tok in tokenize(sentence) {
            let name_like = tok.surface.chars().next().is_some_and(char::is_uppercase)
                && !FUNCTION_WORDS.contains(&tok.normalized.as_str());
            if !name_like {
                if let Some((s, e, _)) = current.take() {
                    spans.push((s, e));
                }
                continue;
            }
            let honorific = HONORIFICS.contains(&tok.normalized.as_str());
            let (ts, te) = tok.byte_span;
            current = match current {
                Some((s, e, prev_hon)) if joins(&sentence[e..ts], prev_hon) => Some((s, te, honorific)),
                Some((s, e, _)) => {
                    spans.push((s, e));
                    Some((ts, te, honorific))
                }
                None => Some((ts, te, honorific)),
            };
        }
        if let Some((s, e, _)) = current {
            spans.push((s, e));
        }
        spans
    }
}

fn joins(gap: &str, after_honorific: bool) -> bool {
    let rest = if after_honorific {
        gap.strip_prefix('.').unwrap_or(gap)
    } else {
        gap
    };
    !rest.is_empty() && rest.chars().all(char::is_whitespace)
}

impl PersonDetector for HeuristicDetector {
    fn count_persons(&self, sentence: &str) -> Result<usize, DetectError> {
        Ok(self.person_spans(sentence).len())
    }
}

/// Person-mention count with the built-in heuristic.
pub fn detect_person_mentions(sentence: &str) -> usize {
    HeuristicDetector.person_spans(sentence).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_full_names() {
        assert_eq!(detect_person_mentions("Alice Smith and Bob Jones arrived."), 2);
    }

    #[test]
    fn no_names() {
        assert_eq!(detect_person_mentions("the soccer team arrived."), 0);
        assert_eq!(detect_person_mentions("The team arrived."), 0);
        assert_eq!(detect_person_mentions("They sat down."), 0);
        assert_eq!(detect_person_mentions(""), 0);
    }

    #[test]
    fn single_name() {
        assert_eq!(detect_person_mentions("Alice plays well."), 1);
    }

    #[test]
    fn honorifics_join_names() {
        assert_eq!(detect_person_mentions("Mr. Smith met Dr. Jane Doe."), 2);
        let spans = HeuristicDetector.person_spans("Mx. Lee left.");
        assert_eq!(spans, vec![(0, 7)]);
    }

    #[test]
    fn punctuation_breaks_runs() {
        assert_eq!(detect_person_mentions("Alice, Bob and Carol sang."), 3);
        assert_eq!(detect_person_mentions("When Alice met Bob, I left."), 2);
    }
}
