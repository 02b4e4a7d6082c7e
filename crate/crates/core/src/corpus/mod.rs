//! Corpus streaming, gendered-token frequency counts, and mining of labeled
//! sentence pairs for the pronoun-number classifier experiments.

mod dataset;
mod frequency;
mod mining;
mod persons;
mod sentences;
mod tokenize;

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    export_classifier_dataset, read_dataset, single_class_dataset, ClassifierDataset, DatasetConfig,
    DatasetFiles, DatasetRecord, Split, write_dataset,
};
pub use frequency::{count_frequencies, FrequencyReport};
pub use mining::{
    import_verified, mine_plural_they, mine_pronoun_sentences, read_pairs, write_pairs, MinedPair,
    PronounLabel, MASK,
};
pub use persons::{detect_person_mentions, DetectError, HeuristicDetector, PersonDetector};
pub use sentences::{sentence_spans, split_sentences};
pub use tokenize::{case_fold, normalized_tokens, token_spans, tokenize, Token};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("pronoun {0:?} is not in the pronoun lexicon")]
    PronounNotInLexicon(String),
    #[error("unknown label {0:?} (expected he, she, they_singular or they_plural)")]
    UnknownLabel(String),
    #[error(transparent)]
    Detector(#[from] DetectError),
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("positive and negative examples must carry distinct, uniform labels: {0}")]
    LabelMismatch(String),
    #[error("invalid mined pair: {0}")]
    InvalidPair(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        if doc_id.is_empty() {
            return Err(CorpusError::InvalidDocument("empty doc_id".into()));
        }
        Ok(Document {
            doc_id,
            text: text.into(),
        })
    }
}

/// How plain-text corpus files map to documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DocLayout {
    /// Each file is one document.
    #[default]
    PerFile,
    /// Each non-empty line is one document.
    PerLine,
}

/// Regular files under `root` (or `root` itself), in sorted path order.
pub fn corpus_files(root: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let meta = fs::metadata(root).map_err(|e| CorpusError::io(root, e))?;
    if meta.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| CorpusError::io(&dir, e))? {
            let path = entry.map_err(|e| CorpusError::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.is_file() {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Lazily reads the documents of a corpus directory.
///
/// Document ids are the file path relative to the corpus root, suffixed with
/// `:<line>` in per-line mode, so they are unique within a run.
pub struct CorpusReader {
    root: PathBuf,
    files: std::vec::IntoIter<PathBuf>,
    layout: DocLayout,
    current: Option<(String, std::io::Lines<BufReader<File>>, usize)>,
}

impl CorpusReader {
    pub fn open(root: impl AsRef<Path>, layout: DocLayout) -> Result<Self, CorpusError> {
        let root = root.as_ref().to_path_buf();
        let files = corpus_files(&root)?;
        Ok(CorpusReader {
            root,
            files: files.into_iter(),
            layout,
            current: None,
        })
    }

    fn relative_id(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        let s = rel.to_string_lossy();
        if s.is_empty() {
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.to_string_lossy().into_owned())
        } else {
            s.into_owned()
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some((id, lines, lineno)) = &mut self.current {
                match lines.next() {
                    Some(Ok(line)) => {
                        *lineno += 1;
                        if line.trim().is_empty() {
                            continue;
                        }
                        return Some(Ok(Document {
                            doc_id: format!("{id}:{lineno}"),
                            text: line,
                        }));
                    }
                    Some(Err(e)) => {
                        let path = self.root.join(id.as_str());
                        self.current = None;
                        return Some(Err(CorpusError::io(&path, e)));
                    }
                    None => self.current = None,
                }
            }
            let path = self.files.next()?;
            let id = self.relative_id(&path);
            match self.layout {
                DocLayout::PerFile => {
                    return Some(
                        fs::read_to_string(&path)
                            .map(|text| Document { doc_id: id, text })
                            .map_err(|e| CorpusError::io(&path, e)),
                    );
                }
                DocLayout::PerLine => match File::open(&path) {
                    Ok(f) => self.current = Some((id, BufReader::new(f).lines(), 0)),
                    Err(e) => return Some(Err(CorpusError::io(&path, e))),
                },
            }
        }
    }
}

/// Adapts a fallible document stream for the counting and mining
/// operations: yields documents until the first error, which is parked in
/// `slot` for the caller to inspect afterwards.
pub fn until_error<'a, I>(
    iter: I,
    slot: &'a mut Option<CorpusError>,
) -> impl Iterator<Item = Document> + 'a
where
    I: IntoIterator<Item = Result<Document, CorpusError>> + 'a,
{
    iter.into_iter().map_while(move |r| match r {
        Ok(d) => Some(d),
        Err(e) => {
            *slot = Some(e);
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_files_and_lines() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("b.txt"), "line one\n\nline two\n").unwrap();
        fs::write(dir.path().join("sub/a.txt"), "nested").unwrap();

        let per_file: Vec<_> = CorpusReader::open(dir.path(), DocLayout::PerFile)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(per_file.len(), 2);
        assert_eq!(per_file[0].doc_id, "b.txt");
        assert_eq!(per_file[1].doc_id, "sub/a.txt");

        let per_line: Vec<_> = CorpusReader::open(dir.path(), DocLayout::PerLine)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        let ids: Vec<_> = per_line.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["b.txt:1", "b.txt:3", "sub/a.txt:1"]);
    }

    #[test]
    fn missing_corpus_is_an_error() {
        assert!(matches!(
            CorpusReader::open("/nonexistent/corpus", DocLayout::PerFile),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn empty_doc_id_rejected() {
        assert!(Document::new("", "text").is_err());
    }
}
