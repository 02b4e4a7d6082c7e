//! Audit reports: a versioned container for every measurement, emitted as
//! key-sorted JSON for machines and Markdown tables for people.

mod human;
mod plan;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::FrequencyReport;
use crate::embedding::{AverageSimilarity, NeighborResult, SimilarityMatrix, WeatResult};
use crate::probe::{ExperimentReport, OccupationProbeRow, ProbeReport};
use crate::subspace::SubspaceComparison;

pub use human::render_human;
pub use plan::{execute_plan, AuditPlan, PlanError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report has no populated section")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Parse(String),
}

/// A result together with the operation and parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement<T> {
    pub operation: String,
    pub parameters: BTreeMap<String, Value>,
    pub result: T,
}

impl<T> Measurement<T> {
    pub fn new(operation: &str, result: T) -> Self {
        Measurement {
            operation: operation.to_string(),
            parameters: BTreeMap::new(),
            result,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sections {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frequency: Vec<Measurement<FrequencyReport>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neighbors: Vec<Measurement<NeighborResult>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub similarity: Vec<Measurement<SimilarityMatrix>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub average_similarity: Vec<Measurement<AverageSimilarity>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weat: Vec<Measurement<WeatResult>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subspace: Vec<Measurement<SubspaceComparison>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Measurement<ProbeReport>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub occupation_probes: Vec<Measurement<Vec<OccupationProbeRow>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classifier: Vec<Measurement<ExperimentReport>>,
}

impl Sections {
    pub fn is_empty(&self) -> bool {
        self.frequency.is_empty()
            && self.neighbors.is_empty()
            && self.similarity.is_empty()
            && self.average_similarity.is_empty()
            && self.weat.is_empty()
            && self.subspace.is_empty()
            && self.probes.is_empty()
            && self.occupation_probes.is_empty()
            && self.classifier.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tool_version: String,
    pub timestamp: String,
    /// SHA-256 over `inputs`.
    pub config_digest: String,
    /// Name → digest or identity of every input the run depended on.
    pub inputs: BTreeMap<String, String>,
    pub sections: Sections,
}

impl AuditReport {
    pub fn new(timestamp: impl Into<String>, inputs: BTreeMap<String, String>, sections: Sections) -> Self {
        AuditReport {
            tool_version: TOOL_VERSION.to_string(),
            timestamp: timestamp.into(),
            config_digest: config_digest(&inputs),
            inputs,
            sections,
        }
    }
}

/// Digest of named inputs; independent of insertion order.
pub fn config_digest(inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in inputs {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Machine,
    Human,
}

/// Pretty JSON with object keys sorted at every level.
pub fn render_machine(report: &AuditReport) -> Result<String, ReportError> {
    if report.sections.is_empty() {
        return Err(ReportError::Empty);
    }
    // Value objects are BTreeMaps, so this sorts keys.
    let value = serde_json::to_value(report).map_err(|e| ReportError::Parse(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| ReportError::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn parse_machine(text: &str) -> Result<AuditReport, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))
}

/// Writes `report.json` or `report.md` under `dir` and returns the path.
pub fn emit_report(report: &AuditReport, format: ReportFormat, dir: &Path) -> Result<PathBuf, ReportError> {
    let (name, text) = match format {
        ReportFormat::Machine => ("report.json", render_machine(report)?),
        ReportFormat::Human => ("report.md", render_human(report)?),
    };
    fs::create_dir_all(dir).map_err(|e| ReportError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| ReportError::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingTable, WeatOptions, WeatSets};
    use crate::lexicon::{WordSet, WordSetRole};

    fn freq_report() -> AuditReport {
        let counts: BTreeMap<String, u64> = [("he".to_string(), 3), ("she".to_string(), 1)].into();
        let f = FrequencyReport {
            counts,
            total_tokens: 7,
            rates: [("he".to_string(), 3.0 / 7.0 * 1e6), ("she".to_string(), 1.0 / 7.0 * 1e6)].into(),
        };
        let sections = Sections {
            frequency: vec![Measurement::new("count_frequencies", f).param("lexicon", "pronoun_frequency")],
            ..Default::default()
        };
        AuditReport::new("2024-01-01T00:00:00Z", [("corpus".to_string(), "c.txt".to_string())].into(), sections)
    }

    #[test]
    fn frequency_only_report() {
        let dir = tempfile::tempdir().unwrap();
        let p = emit_report(&freq_report(), ReportFormat::Machine, dir.path()).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let text = fs::read_to_string(p).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["sections"].as_object().unwrap().len(), 1);
    }

    #[test]
    fn empty_report_rejected() {
        let r = AuditReport::new("t", BTreeMap::new(), Sections::default());
        assert!(matches!(render_machine(&r), Err(ReportError::Empty)));
        assert!(matches!(render_human(&r), Err(ReportError::Empty)));
    }

    #[test]
    fn machine_round_trip_and_determinism() {
        let t = EmbeddingTable::from_entries([
            ("x1", [0.3f32, 0.1]),
            ("y1", [0.1, 0.7]),
            ("a1", [1.0, 0.2]),
            ("b1", [0.1, 1.0]),
        ])
        .unwrap();
        let s = |n: &str, w: &str| WordSet::new(n, WordSetRole::Target, [w]).unwrap();
        let (x, y, a, b) = (s("x", "x1"), s("y", "y1"), s("a", "a1"), s("b", "b1"));
        let w = crate::embedding::weat_effect_size(&t, WeatSets { x: &x, y: &y, a: &a, b: &b }, &WeatOptions::default())
            .unwrap();
        let mut r = freq_report();
        r.sections.weat.push(Measurement::new("weat_effect_size", w).param("seed", 0));
        let text = render_machine(&r).unwrap();
        assert_eq!(parse_machine(&text).unwrap(), r);
        assert_eq!(render_machine(&r).unwrap(), text);
        // keys sorted at the top level
        let keys: Vec<&str> = text.lines().filter(|l| l.starts_with("  \"")).map(|l| l.trim()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn digest_depends_only_on_inputs() {
        let a: BTreeMap<String, String> = [("x".into(), "1".into()), ("y".into(), "2".into())].into();
        let b: BTreeMap<String, String> = [("y".into(), "2".into()), ("x".into(), "1".into())].into();
        assert_eq!(config_digest(&a), config_digest(&b));
        let c: BTreeMap<String, String> = [("x".into(), "1".into()), ("y".into(), "3".into())].into();
        assert_ne!(config_digest(&a), config_digest(&c));
    }

    #[test]
    fn unwritable_destination() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        fs::write(&file, "").unwrap();
        assert!(matches!(
            emit_report(&freq_report(), ReportFormat::Machine, &file.join("sub")),
            Err(ReportError::Io { .. })
        ));
    }
}
