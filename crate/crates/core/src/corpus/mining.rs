//! Mining of consecutive sentence pairs whose second sentence carries a
//! single target pronoun.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::persons::PersonDetector;
use super::sentences::sentence_spans;
use super::tokenize::tokenize;
use super::{CorpusError, Document};
use crate::lexicon::WordSet;

/// Mask sentinel written into exported text.
pub const MASK: &str = "[MASK]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PronounLabel {
    He,
    She,
    TheySingular,
    TheyPlural,
}

impl PronounLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PronounLabel::He => "he",
            PronounLabel::She => "she",
            PronounLabel::TheySingular => "they_singular",
            PronounLabel::TheyPlural => "they_plural",
        }
    }
}

impl fmt::Display for PronounLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PronounLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "he" => Ok(PronounLabel::He),
            "she" => Ok(PronounLabel::She),
            "they_singular" | "they(s)" => Ok(PronounLabel::TheySingular),
            "they_plural" | "they(p)" => Ok(PronounLabel::TheyPlural),
            other => Err(CorpusError::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedPair {
    pub doc_id: String,
    pub sentence_prev: String,
    pub sentence_target: String,
    /// Surface form of the pronoun as it appears in `sentence_target`.
    pub pronoun: String,
    pub label: PronounLabel,
    pub masked_target: String,
    /// Byte offsets of the pronoun in `sentence_target`.
    pub pronoun_span: (usize, usize),
}

impl MinedPair {
    /// Reinserts the pronoun at the mask position.
    pub fn unmask(&self) -> Option<String> {
        let (s, _) = self.pronoun_span;
        let head = self.masked_target.get(..s)?;
        let tail = self.masked_target.get(s..)?.strip_prefix(MASK)?;
        Some(format!("{head}{}{tail}", self.pronoun))
    }

    /// Re-checks the predicates that define a mined pair: exactly one
    /// lexicon pronoun in the target sentence, a consistent mask, and for
    /// plural "they" at least two person mentions in the previous sentence.
    pub fn validate(
        &self,
        pronoun_lexicon: &WordSet,
        detector: &dyn PersonDetector,
    ) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidPair(format!("{}: {m}", self.doc_id)));

        let hits: Vec<_> = tokenize(&self.sentence_target)
            .into_iter()
            .filter(|t| pronoun_lexicon.contains(&t.normalized))
            .collect();
        if hits.len() != 1 {
            return bad(format!("{} pronoun tokens in target sentence", hits.len()));
        }
        if hits[0].byte_span != self.pronoun_span || hits[0].surface != self.pronoun {
            return bad("pronoun span does not match the target sentence".into());
        }
        if self.masked_target.matches(MASK).count() != 1 {
            return bad("masked target must contain exactly one mask".into());
        }
        if self.unmask().as_deref() != Some(self.sentence_target.as_str()) {
            return bad("mask round trip does not reproduce the target sentence".into());
        }
        if self.label == PronounLabel::TheyPlural {
            if hits[0].normalized != "they" {
                return bad("plural pair whose pronoun is not \"they\"".into());
            }
            let persons = detector.count_persons(&self.sentence_prev)?;
            if persons < 2 {
                return bad(format!("plural pair with {persons} person mention(s)"));
            }
        }
        Ok(())
    }
}

fn mask_at(sentence: &str, span: (usize, usize)) -> String {
    format!("{}{MASK}{}", &sentence[..span.0], &sentence[span.1..])
}

/// Pairs in one document whose target sentence has exactly one lexicon
/// pronoun, equal to `target`. `prev_ok` filters on the previous sentence.
fn mine_document<F>(
    doc: &Document,
    target: &str,
    lexicon: &WordSet,
    label: PronounLabel,
    prev_ok: F,
) -> Result<Vec<MinedPair>, CorpusError>
where
    F: Fn(&str) -> Result<bool, CorpusError>,
{
    let spans = sentence_spans(&doc.text);
    let mut out = Vec::new();
    for w in spans.windows(2) {
        let prev = &doc.text[w[0].clone()];
        let sent = &doc.text[w[1].clone()];
        let mut hits = tokenize(sent)
            .into_iter()
            .filter(|t| lexicon.contains(&t.normalized));
        let (Some(tok), None) = (hits.next(), hits.next()) else {
            continue;
        };
        if tok.normalized != target || !prev_ok(prev)? {
            continue;
        }
        out.push(MinedPair {
            doc_id: doc.doc_id.clone(),
            sentence_prev: prev.to_string(),
            sentence_target: sent.to_string(),
            masked_target: mask_at(sent, tok.byte_span),
            pronoun: tok.surface,
            label,
            pronoun_span: tok.byte_span,
        });
    }
    Ok(out)
}

const BATCH: usize = 256;

fn mine_stream<I, F>(docs: I, per_doc: F) -> Result<Vec<MinedPair>, CorpusError>
where
    I: IntoIterator<Item = Document>,
    F: Fn(&Document) -> Result<Vec<MinedPair>, CorpusError> + Sync,
{
    let mut out = Vec::new();
    let mut batch = Vec::with_capacity(BATCH);
    let mut docs = docs.into_iter().peekable();
    while docs.peek().is_some() {
        batch.clear();
        batch.extend(docs.by_ref().take(BATCH));
        let mined: Vec<Vec<MinedPair>> = batch.par_iter().map(&per_doc).collect::<Result<_, _>>()?;
        out.extend(mined.into_iter().flatten());
    }
    Ok(out)
}

/// Consecutive sentence pairs whose second sentence has "they" as its only
/// pronoun and whose first sentence mentions two or more persons.
pub fn mine_plural_they<I>(
    docs: I,
    pronoun_lexicon: &WordSet,
    detector: &dyn PersonDetector,
) -> Result<Vec<MinedPair>, CorpusError>
where
    I: IntoIterator<Item = Document>,
{
    if !pronoun_lexicon.contains("they") {
        return Err(CorpusError::PronounNotInLexicon("they".into()));
    }
    mine_stream(docs, |doc| {
        mine_document(doc, "they", pronoun_lexicon, PronounLabel::TheyPlural, |prev| {
            Ok(detector.count_persons(prev)? >= 2)
        })
    })
}

/// Consecutive sentence pairs whose second sentence has `target_pronoun` as
/// its only pronoun. Candidates for singular "they" are meant for human
/// review before use (see [`import_verified`]).
pub fn mine_pronoun_sentences<I>(
    docs: I,
    target_pronoun: &str,
    pronoun_lexicon: &WordSet,
    label: PronounLabel,
) -> Result<Vec<MinedPair>, CorpusError>
where
    I: IntoIterator<Item = Document>,
{
    let target = super::tokenize::case_fold(target_pronoun);
    if !pronoun_lexicon.contains(&target) {
        return Err(CorpusError::PronounNotInLexicon(target_pronoun.to_string()));
    }
    mine_stream(docs, |doc| {
        mine_document(doc, &target, pronoun_lexicon, label, |_| Ok(true))
    })
}

pub fn write_pairs(path: &Path, pairs: &[MinedPair]) -> Result<(), CorpusError> {
    let f = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in pairs {
        let line = serde_json::to_string(p).expect("mined pair serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

#[derive(Deserialize)]
struct Reviewed {
    #[serde(flatten)]
    pair: MinedPair,
    #[serde(default)]
    verified: Option<bool>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<MinedPair>, CorpusError> {
    read_jsonl(path)
}

/// Ingests a human-reviewed candidate file: lines are mined pairs with an
/// added `"verified": true|false` field. Only verified lines are kept, and
/// each is re-validated before acceptance.
pub fn import_verified(
    path: &Path,
    pronoun_lexicon: &WordSet,
    detector: &dyn PersonDetector,
) -> Result<Vec<MinedPair>, CorpusError> {
    let reviewed: Vec<Reviewed> = read_jsonl(path)?;
    let mut out = Vec::new();
    for r in reviewed {
        if r.verified == Some(true) {
            r.pair.validate(pronoun_lexicon, detector)?;
            out.push(r.pair);
        }
    }
    Ok(out)
}
