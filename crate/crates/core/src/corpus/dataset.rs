//! Balanced, shuffled classifier datasets built from mined pairs.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mining::{MinedPair, MASK};
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One exported line. `label` is a free string so that operator-supplied
/// warm-up sets (e.g. "i" vs "we") share the schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub doc_id: String,
    pub sentence_prev: String,
    pub sentence_target: String,
    pub masked_target: String,
    pub pronoun: String,
    pub label: String,
    pub split: Split,
}

impl DatasetRecord {
    fn from_pair(p: &MinedPair, split: Split) -> Self {
        DatasetRecord {
            doc_id: p.doc_id.clone(),
            sentence_prev: p.sentence_prev.clone(),
            sentence_target: p.sentence_target.clone(),
            masked_target: p.masked_target.clone(),
            pronoun: p.pronoun.clone(),
            label: p.label.to_string(),
            split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    /// Fraction of each class assigned to the training split.
    pub train_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierDataset {
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

/// Paths of a dataset written to disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

fn uniform_label(pairs: &[MinedPair], what: &str) -> Result<String, CorpusError> {
    let labels: BTreeSet<_> = pairs.iter().map(|p| p.label).collect();
    match labels.len() {
        1 => Ok(labels.into_iter().next().unwrap().to_string()),
        n => Err(CorpusError::LabelMismatch(format!("{what} carries {n} labels"))),
    }
}

/// Balances two classes to `min(|pos|, |neg|)` examples each, splits each
/// class train/test by `train_fraction`, and shuffles each split. Output is
/// a pure function of the inputs and the seed.
pub fn export_classifier_dataset(
    pos: &[MinedPair],
    neg: &[MinedPair],
    config: &DatasetConfig,
) -> Result<ClassifierDataset, CorpusError> {
    if pos.is_empty() {
        return Err(CorpusError::EmptyInput("positive example list"));
    }
    if neg.is_empty() {
        return Err(CorpusError::EmptyInput("negative example list"));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(CorpusError::InvalidConfig(format!(
            "train fraction {} outside [0, 1]",
            config.train_fraction
        )));
    }
    let (lp, ln) = (uniform_label(pos, "positive list")?, uniform_label(neg, "negative list")?);
    if lp == ln {
        return Err(CorpusError::LabelMismatch(format!("both lists are labeled {lp}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = pos.len().min(neg.len());
    let n_train = (n as f64 * config.train_fraction).round() as usize;

    let mut train = Vec::with_capacity(2 * n_train);
    let mut test = Vec::with_capacity(2 * (n - n_train));
    for class in [pos, neg] {
        let mut idx: Vec<usize> = (0..class.len()).collect();
        idx.shuffle(&mut rng);
        for (rank, &i) in idx.iter().take(n).enumerate() {
            if rank < n_train {
                train.push(DatasetRecord::from_pair(&class[i], Split::Train));
            } else {
                test.push(DatasetRecord::from_pair(&class[i], Split::Test));
            }
        }
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(ClassifierDataset { train, test })
}

/// Records for a one-class evaluation set, e.g. the held-out plural test set.
pub fn single_class_dataset(pairs: &[MinedPair], split: Split) -> Result<Vec<DatasetRecord>, CorpusError> {
    if pairs.is_empty() {
        return Err(CorpusError::EmptyInput("evaluation pair list"));
    }
    uniform_label(pairs, "evaluation list")?;
    Ok(pairs.iter().map(|p| DatasetRecord::from_pair(p, split)).collect())
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), CorpusError> {
    let f = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

impl ClassifierDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `train.jsonl` and `test.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetFiles, CorpusError> {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let files = DatasetFiles {
            train: dir.join("train.jsonl"),
            test: dir.join("test.jsonl"),
        };
        write_dataset(&files.train, &self.train)?;
        write_dataset(&files.test, &self.test)?;
        Ok(files)
    }
}

/// Reads and schema-checks a dataset file: every line must parse, and its
/// masked target must hold exactly one mask.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if rec.masked_target.matches(MASK).count() != 1 {
            return Err(parse_err("masked_target must contain exactly one mask".into()));
        }
        if rec.label.is_empty() {
            return Err(parse_err("empty label".into()));
        }
        out.push(rec);
    }
    Ok(out)
}
