//! Request and response bodies of the scoring service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    /// Text with exactly one `[MASK]`.
    pub text: String,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub candidate_probs: BTreeMap<String, f64>,
    /// Highest-probability vocabulary items, best first.
    #[serde(default)]
    pub top_k: Vec<(String, f64)>,
    /// Candidates the model cannot score as a single vocabulary item.
    #[serde(default)]
    pub unscorable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub dataset_path: String,
    pub label_set: Vec<String>,
    pub epochs: u32,
    pub seed: u64,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub run_id: String,
    /// Anything else the service reports (hyperparameters, losses).
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub run_id: String,
    pub dataset_path: String,
}

/// Rows are true labels, columns predicted labels, both in `labels` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts.iter().enumerate().map(|(i, r)| r.get(i).copied().unwrap_or(0)).sum()
    }

    pub fn get(&self, truth: &str, predicted: &str) -> u64 {
        let i = self.labels.iter().position(|l| l == truth);
        let j = self.labels.iter().position(|l| l == predicted);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    /// Tallies (truth, prediction) pairs. Labels are sorted.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)> + Clone) -> Self {
        let mut labels: Vec<String> = pairs
            .clone()
            .into_iter()
            .flat_map(|(t, p)| [t.to_string(), p.to_string()])
            .collect();
        labels.sort();
        labels.dedup();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (t, p) in pairs {
            let i = labels.iter().position(|l| l == t).expect("label collected");
            let j = labels.iter().position(|l| l == p).expect("label collected");
            counts[i][j] += 1;
        }
        ConfusionMatrix { labels, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub accuracy: f64,
    pub confusion_matrix: ConfusionMatrix,
    /// Predicted label per example, in dataset order.
    pub predictions: Vec<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerRequest {
    pub text: String,
}

/// Character offsets of a person mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerResponse {
    pub spans: Vec<PersonSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_name: String,
    #[serde(default)]
    pub model_digest: Option<String>,
    #[serde(default)]
    pub vocab_hash: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}
