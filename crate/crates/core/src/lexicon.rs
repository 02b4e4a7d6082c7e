//! Named word sets and the bundled defaults.
//!
//! Word-set files are TOML; each top-level table is a set:
//!
//! ```toml
//! [pleasant]
//! role = "attribute"
//! words = ["joy", "love"]
//!
//! [pleasant_plus]
//! role = "attribute"
//! include = ["pleasant"]
//! words = ["peace"]
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::case_fold;

pub const BUNDLED_WORDSETS: &str = include_str!("../data/wordsets.toml");
pub const BUNDLED_NAMES: &str = include_str!("../data/names.txt");
pub const BUNDLED_TEMPLATES: &str = include_str!("../data/templates.jsonl");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("word set {0:?} is empty")]
    Empty(String),
    #[error("word set {0:?} contains an empty word")]
    EmptyWord(String),
    #[error("word set {set:?} lists {word:?} more than once")]
    Duplicate { set: String, word: String },
    #[error("unknown word set {0:?}")]
    Unknown(String),
    #[error("word set {set:?} includes unknown set {include:?}")]
    UnknownInclude { set: String, include: String },
    #[error("word-set file: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordSetRole {
    Target,
    Attribute,
    Occupation,
    Pronoun,
}

/// A named, case-folded, duplicate-free, non-empty list of words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWordSet")]
pub struct WordSet {
    name: String,
    role: WordSetRole,
    words: Vec<String>,
}

#[derive(Deserialize)]
struct RawWordSet {
    name: String,
    role: WordSetRole,
    words: Vec<String>,
}

impl TryFrom<RawWordSet> for WordSet {
    type Error = LexiconError;

    fn try_from(raw: RawWordSet) -> Result<Self, Self::Error> {
        WordSet::new(raw.name, raw.role, raw.words)
    }
}

impl WordSet {
    pub fn new<I, S>(name: impl Into<String>, role: WordSetRole, words: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.into();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for w in words {
            let w = case_fold(w.as_ref().trim());
            if w.is_empty() {
                return Err(LexiconError::EmptyWord(name));
            }
            if !seen.insert(w.clone()) {
                return Err(LexiconError::Duplicate { set: name, word: w });
            }
            out.push(w);
        }
        if out.is_empty() {
            return Err(LexiconError::Empty(name));
        }
        Ok(WordSet {
            name,
            role,
            words: out,
        })
    }

    /// Concatenation of several sets, keeping the first occurrence of each
    /// word.
    pub fn union(name: impl Into<String>, role: WordSetRole, sets: &[&WordSet]) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        let words: Vec<&str> = sets
            .iter()
            .flat_map(|s| s.words.iter())
            .filter(|w| seen.insert(w.as_str()))
            .map(String::as_str)
            .collect();
        WordSet::new(name, role, words)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> WordSetRole {
        self.role
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }

    /// SHA-256 over the name, role, and words; pins the set in reports.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0]);
        h.update(format!("{:?}", self.role).as_bytes());
        for w in &self.words {
            h.update([0]);
            h.update(w.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Deserialize)]
struct SetSpec {
    role: WordSetRole,
    #[serde(default)]
    include: Vec<String>,
    #[serde(default)]
    words: Vec<String>,
}

/// A collection of named word sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordSetLibrary {
    sets: BTreeMap<String, WordSet>,
}

impl WordSetLibrary {
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_WORDSETS).expect("bundled word sets are valid")
    }

    /// Parses a word-set file.
    pub fn from_toml_str(text: &str) -> Result<Self, LexiconError> {
        let mut lib = WordSetLibrary::default();
        lib.extend_from_toml_str(text)?;
        Ok(lib)
    }

    /// Adds the sets of a word-set file, replacing same-named sets. Includes
    /// may name sets anywhere in the file or already in `self`.
    pub fn extend_from_toml_str(&mut self, text: &str) -> Result<(), LexiconError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LexiconError::Parse(e.to_string()))?;
        let mut pending: Vec<(String, SetSpec)> = Vec::new();
        for (name, value) in table {
            let spec: SetSpec = value
                .try_into()
                .map_err(|e: toml::de::Error| LexiconError::Parse(format!("[{name}]: {e}")))?;
            pending.push((name, spec));
        }
        while !pending.is_empty() {
            let ready = pending
                .iter()
                .position(|(_, spec)| spec.include.iter().all(|i| self.sets.contains_key(i)));
            let Some(pos) = ready else {
                // Every remaining set waits on an unknown or cyclic include.
                let (name, spec) = &pending[0];
                let include = spec
                    .include
                    .iter()
                    .find(|i| !self.sets.contains_key(*i))
                    .cloned()
                    .unwrap_or_default();
                return Err(LexiconError::UnknownInclude { set: name.clone(), include });
            };
            let (name, spec) = pending.remove(pos);
            self.insert_spec(name, spec)?;
        }
        Ok(())
    }

    fn insert_spec(&mut self, name: String, spec: SetSpec) -> Result<(), LexiconError> {
        let mut words: Vec<String> = Vec::new();
        for inc in &spec.include {
            let set = self.sets.get(inc).ok_or_else(|| LexiconError::UnknownInclude {
                set: name.clone(),
                include: inc.clone(),
            })?;
            words.extend(set.words.iter().cloned());
        }
        words.extend(spec.words);
        let set = WordSet::new(name.clone(), spec.role, words)?;
        self.sets.insert(name, set);
        Ok(())
    }

    /// Bundled sets overridden (or extended) by the sets in `path`.
    pub fn bundled_with_overrides(path: &Path) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut lib = Self::bundled();
        lib.extend_from_toml_str(&text)?;
        Ok(lib)
    }

    pub fn get(&self, name: &str) -> Result<&WordSet, LexiconError> {
        self.sets.get(name).ok_or_else(|| LexiconError::Unknown(name.to_string()))
    }

    pub fn insert(&mut self, set: WordSet) {
        self.sets.insert(set.name.clone(), set);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }
}

/// Bundled unisex starter names, one per line.
pub fn bundled_names() -> Vec<String> {
    parse_name_list(BUNDLED_NAMES)
}

pub fn parse_name_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}
