use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::wire::{ConfusionMatrix, EvalRequest, EvalResponse, ScoreRequest, ScoreResponse, TrainRequest, TrainResponse};
use super::ProbeError;
use crate::corpus::read_dataset;

/// Masked-LM scoring.
pub trait ScoringBackend: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ProbeError>;

    /// Stable description of the backend, folded into report digests.
    fn identity(&self) -> String;
}

/// Sequence-classifier training and evaluation.
pub trait ClassifierBackend: Send + Sync {
    fn train(&self, request: &TrainRequest) -> Result<TrainResponse, ProbeError>;
    fn eval(&self, request: &EvalRequest) -> Result<EvalResponse, ProbeError>;
    fn identity(&self) -> String;
}

/// Lowercase hex SHA-256 of the prompt text; the fixture lookup key.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// One line of a scoring fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub prompt_hash: String,
    /// The prompt itself, for readability; not used for lookup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub candidate_probs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unscorable: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_k: Vec<(String, f64)>,
}

impl FixtureRecord {
    pub fn new(prompt: &str, response: &ScoreResponse) -> Self {
        FixtureRecord {
            prompt_hash: prompt_hash(prompt),
            prompt: Some(prompt.to_string()),
            candidate_probs: response.candidate_probs.clone(),
            unscorable: response.unscorable.clone(),
            top_k: response.top_k.clone(),
        }
    }
}

/// Replays recorded responses keyed by prompt hash. No network.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    records: HashMap<String, FixtureRecord>,
    digest: String,
}

impl FixtureBackend {
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Result<Self, ProbeError> {
        let mut map = HashMap::new();
        let mut h = Sha256::new();
        for (i, r) in records.into_iter().enumerate() {
            h.update(serde_json::to_vec(&r).expect("record serializes"));
            if map.insert(r.prompt_hash.clone(), r).is_some() {
                return Err(ProbeError::Parse {
                    source_name: "fixture".into(),
                    line: i + 1,
                    message: "duplicate prompt hash".into(),
                });
            }
        }
        Ok(FixtureBackend {
            records: map,
            digest: hex::encode(h.finalize()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        let f = File::open(path).map_err(|e| ProbeError::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| ProbeError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| ProbeError::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_records(records).map_err(|e| match e {
            ProbeError::Parse { line, message, .. } => ProbeError::Parse {
                source_name: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl ScoringBackend for FixtureBackend {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ProbeError> {
        let hash = prompt_hash(&request.text);
        let r = self.records.get(&hash).ok_or_else(|| ProbeError::FixtureMiss {
            prompt_hash: hash,
            prompt: request.text.clone(),
        })?;
        let mut top_k = r.top_k.clone();
        if let Some(k) = request.top_k {
            top_k.truncate(k);
        }
        Ok(ScoreResponse {
            candidate_probs: r
                .candidate_probs
                .iter()
                .filter(|(c, _)| request.candidates.contains(c))
                .map(|(c, p)| (c.clone(), *p))
                .collect(),
            top_k,
            unscorable: r.unscorable.iter().filter(|c| request.candidates.contains(c)).cloned().collect(),
        })
    }

    fn identity(&self) -> String {
        format!("fixture:{}", self.digest)
    }
}

/// Passes requests to another backend and keeps every exchange, so a live
/// run can be saved as a fixture.
pub struct RecordingBackend<'a> {
    inner: &'a dyn ScoringBackend,
    records: Mutex<BTreeMap<String, FixtureRecord>>,
}

impl<'a> RecordingBackend<'a> {
    pub fn new(inner: &'a dyn ScoringBackend) -> Self {
        RecordingBackend {
            inner,
            records: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded exchanges in prompt-hash order.
    pub fn records(&self) -> Vec<FixtureRecord> {
        self.records.lock().expect("not poisoned").values().cloned().collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), ProbeError> {
        write_fixture(path, &self.records())
    }
}

impl ScoringBackend for RecordingBackend<'_> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ProbeError> {
        let resp = self.inner.score(request)?;
        let rec = FixtureRecord::new(&request.text, &resp);
        self.records.lock().expect("not poisoned").insert(rec.prompt_hash.clone(), rec);
        Ok(resp)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

pub fn write_fixture(path: &Path, records: &[FixtureRecord]) -> Result<(), ProbeError> {
    let f = File::create(path).map_err(|e| ProbeError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("record serializes");
        writeln!(w).map_err(|e| ProbeError::io(path, e))?;
    }
    w.flush().map_err(|e| ProbeError::io(path, e))
}

/// One line of a classifier fixture: the label a run predicts for an
/// example, keyed by [`example_hash`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierFixtureRecord {
    pub run_id: String,
    pub example_hash: String,
    pub predicted: String,
}

/// SHA-256 over the context and masked sentences of a dataset example.
pub fn example_hash(sentence_prev: &str, masked_target: &str) -> String {
    let mut h = Sha256::new();
    h.update(sentence_prev.as_bytes());
    h.update([0]);
    h.update(masked_target.as_bytes());
    hex::encode(h.finalize())
}

/// Replays recorded classifier predictions. Training only checks that the
/// run has recorded predictions; evaluation reads the dataset and answers
/// per example.
#[derive(Debug)]
pub struct FixtureClassifier {
    predictions: HashMap<String, HashMap<String, String>>,
    trained: Mutex<Vec<TrainRequest>>,
}

impl FixtureClassifier {
    pub fn from_records(records: impl IntoIterator<Item = ClassifierFixtureRecord>) -> Self {
        let mut predictions: HashMap<String, HashMap<String, String>> = HashMap::new();
        for r in records {
            predictions.entry(r.run_id).or_default().insert(r.example_hash, r.predicted);
        }
        FixtureClassifier {
            predictions,
            trained: Mutex::new(Vec::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        let f = File::open(path).map_err(|e| ProbeError::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| ProbeError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| ProbeError::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self::from_records(records))
    }

    /// Training requests received, in order.
    pub fn training_log(&self) -> Vec<TrainRequest> {
        self.trained.lock().expect("not poisoned").clone()
    }
}

impl ClassifierBackend for FixtureClassifier {
    fn train(&self, request: &TrainRequest) -> Result<TrainResponse, ProbeError> {
        if !self.predictions.contains_key(&request.run_id) {
            return Err(ProbeError::Backend(format!("no recorded predictions for run {:?}", request.run_id)));
        }
        read_dataset(Path::new(&request.dataset_path))?;
        self.trained.lock().expect("not poisoned").push(request.clone());
        Ok(TrainResponse {
            run_id: request.run_id.clone(),
            extra: BTreeMap::new(),
        })
    }

    fn eval(&self, request: &EvalRequest) -> Result<EvalResponse, ProbeError> {
        let preds = self
            .predictions
            .get(&request.run_id)
            .ok_or_else(|| ProbeError::Backend(format!("unknown run {:?}", request.run_id)))?;
        let records = read_dataset(Path::new(&request.dataset_path))?;
        let mut predictions = Vec::with_capacity(records.len());
        for r in &records {
            let h = example_hash(&r.sentence_prev, &r.masked_target);
            let p = preds
                .get(&h)
                .ok_or_else(|| ProbeError::Backend(format!("no recorded prediction for example {}", r.doc_id)))?;
            predictions.push(p.clone());
        }
        let matrix = ConfusionMatrix::from_pairs(records.iter().map(|r| r.label.as_str()).zip(predictions.iter().map(String::as_str)));
        let accuracy = if records.is_empty() {
            0.0
        } else {
            matrix.correct() as f64 / records.len() as f64
        };
        Ok(EvalResponse {
            accuracy,
            confusion_matrix: matrix,
            predictions,
            extra: BTreeMap::new(),
        })
    }

    fn identity(&self) -> String {
        "fixture-classifier".into()
    }
}
