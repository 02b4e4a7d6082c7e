//! Masked-LM probes: the misgendering template battery, the occupation
//! probe, and the pronoun-number classifier experiments, run against a
//! live scoring service or recorded fixtures.

mod backend;
mod classifier;
mod client;
mod scoring;
mod template;
pub mod wire;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use backend::{
    example_hash, prompt_hash, write_fixture, ClassifierBackend, ClassifierFixtureRecord, FixtureBackend,
    FixtureClassifier, FixtureRecord, RecordingBackend, ScoringBackend,
};
pub use classifier::{run_classifier_experiment, ClassifierOutcome, ClassifierSpec, ExperimentConfig, ExperimentReport};
pub use client::{ClientConfig, ServiceClient};
pub use scoring::{
    occupation_probe, occupation_prompt, score_cases, ArgmaxMode, CaseOutcome, OccupationProbeRow, ProbeReport,
    ProbeResult, ScoreOptions,
};
pub use template::{
    bundled_templates, default_pairs, load_templates, parse_pairs, parse_templates, render_templates, ProbeCase,
    PronounPair, Template, DEFAULT_PAIRS, NAME_SLOT, POSSESSIVE_SLOT,
};

use crate::corpus::CorpusError;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("template {template_id:?}: {message}")]
    Template { template_id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("invalid pronoun pair {0}")]
    InvalidPair(String),
    #[error("invalid probe case: {0}")]
    InvalidCase(String),
    #[error("fixture has no response for prompt {prompt:?} (hash {prompt_hash})")]
    FixtureMiss { prompt_hash: String, prompt: String },
    #[error("backend response for {prompt:?} omits candidate {candidate:?}")]
    MissingCandidate { prompt: String, candidate: String },
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("backend rejected the request (HTTP {status}): {body}")]
    Protocol { status: u16, body: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("inconsistent evaluation: {0}")]
    InconsistentEval(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl ProbeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ProbeError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
