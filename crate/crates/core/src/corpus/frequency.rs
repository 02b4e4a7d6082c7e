use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tokenize::normalized_tokens;
use super::Document;
use crate::lexicon::WordSet;

/// Lexicon word counts over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
    /// Occurrences per million tokens. Empty when `total_tokens` is zero.
    pub rates: BTreeMap<String, f64>,
}

impl FrequencyReport {
    pub fn empty(lexicon: &WordSet) -> Self {
        FrequencyReport {
            counts: lexicon.words().iter().map(|w| (w.clone(), 0)).collect(),
            total_tokens: 0,
            rates: BTreeMap::new(),
        }
    }

    fn from_counts(counts: BTreeMap<String, u64>, total_tokens: u64) -> Self {
        let rates = if total_tokens == 0 {
            BTreeMap::new()
        } else {
            counts
                .iter()
                .map(|(w, &c)| (w.clone(), per_million(c, total_tokens)))
                .collect()
        };
        FrequencyReport {
            counts,
            total_tokens,
            rates,
        }
    }

    /// Fieldwise sum of two reports. Words present in only one side keep
    /// their count.
    pub fn merge(&self, other: &FrequencyReport) -> FrequencyReport {
        let mut counts = self.counts.clone();
        for (w, c) in &other.counts {
            *counts.entry(w.clone()).or_insert(0) += c;
        }
        Self::from_counts(counts, self.total_tokens + other.total_tokens)
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn rate(&self, word: &str) -> Option<f64> {
        self.rates.get(word).copied()
    }
}

fn per_million(count: u64, total: u64) -> f64 {
    count as f64 / total as f64 * 1e6
}

struct Tally {
    counts: Vec<u64>,
    total: u64,
}

fn tally_text(text: &str, index: &HashMap<&str, usize>, tally: &mut Tally) {
    for tok in normalized_tokens(text) {
        tally.total += 1;
        if let Some(&pos) = index.get(tok.as_str()) {
            tally.counts[pos] += 1;
        }
    }
}

const BATCH: usize = 512;

/// Counts lexicon words over a document stream.
///
/// Documents are consumed in batches and each batch is counted in parallel;
/// since all tallies are integer sums the result does not depend on how the
/// stream is batched or sharded.
pub fn count_frequencies<I>(docs: I, lexicon: &WordSet) -> FrequencyReport
where
    I: IntoIterator<Item = Document>,
{
    let words = lexicon.words();
    let index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut total = Tally {
        counts: vec![0; words.len()],
        total: 0,
    };

    let mut batch = Vec::with_capacity(BATCH);
    let flush = |batch: &mut Vec<Document>, total: &mut Tally| {
        let part = batch
            .par_iter()
            .fold(
                || Tally {
                    counts: vec![0; words.len()],
                    total: 0,
                },
                |mut t, doc| {
                    tally_text(&doc.text, &index, &mut t);
                    t
                },
            )
            .reduce(
                || Tally {
                    counts: vec![0; words.len()],
                    total: 0,
                },
                |mut a, b| {
                    a.counts.iter_mut().zip(&b.counts).for_each(|(x, y)| *x += y);
                    a.total += b.total;
                    a
                },
            );
        total.counts.iter_mut().zip(&part.counts).for_each(|(x, y)| *x += y);
        total.total += part.total;
        batch.clear();
    };

    for doc in docs {
        batch.push(doc);
        if batch.len() == BATCH {
            flush(&mut batch, &mut total);
        }
    }
    flush(&mut batch, &mut total);

    let counts = words.iter().cloned().zip(total.counts).collect();
    FrequencyReport::from_counts(counts, total.total)
}
