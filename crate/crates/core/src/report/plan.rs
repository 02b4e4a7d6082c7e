//! Declarative audit plans: a TOML file naming every input and measurement,
//! executed into one [`AuditReport`].
//!
//! ```toml
//! wordsets = "sets.toml"            # optional overrides of the bundled sets
//!
//! [embedding]
//! path = "vectors.txt"
//! format = "plain"
//!
//! [[frequency]]
//! corpus = "wiki/"
//!
//! [[neighbors]]
//! query = "xe"
//! k = 5
//!
//! [[weat]]
//! x = "binary_all"
//! y = "nonbinary_all"
//! a = "pleasant"
//! b = "unpleasant"
//!
//! [backend]
//! fixture = "scores.jsonl"
//!
//! [misgendering]
//! ```
//!
//! Relative paths resolve against the plan file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AuditReport, Measurement, ReportFormat, Sections};
use crate::corpus::{corpus_files, count_frequencies, until_error, CorpusError, CorpusReader, DocLayout};
use crate::embedding::{
    average_similarity, nearest_neighbors, similarity_matrix, weat_effect_size, EmbeddingError, EmbeddingFormat,
    EmbeddingTable, WeatOptions, WeatSets,
};
use crate::lexicon::{bundled_names, parse_name_list, LexiconError, WordSet, WordSetLibrary};
use crate::probe::{
    bundled_templates, default_pairs, load_templates, occupation_probe, parse_pairs, render_templates,
    run_classifier_experiment, score_cases, ArgmaxMode, ClassifierBackend, ClassifierSpec, ClientConfig,
    ExperimentConfig, FixtureBackend, FixtureClassifier, ProbeError, ScoreOptions, ScoringBackend, ServiceClient,
};
use crate::subspace::{compare_subspaces, principal_components, SubspaceError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanLayout {
    #[default]
    PerFile,
    PerLine,
}

impl From<PlanLayout> for DocLayout {
    fn from(l: PlanLayout) -> Self {
        match l {
            PlanLayout::PerFile => DocLayout::PerFile,
            PlanLayout::PerLine => DocLayout::PerLine,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingPlan {
    pub path: PathBuf,
    #[serde(default)]
    pub format: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyPlan {
    pub corpus: PathBuf,
    #[serde(default)]
    pub layout: PlanLayout,
    #[serde(default = "default_frequency_set")]
    pub lexicon: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborPlan {
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "yes")]
    pub exclude_self: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityPlan {
    pub rows: String,
    pub cols: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragePlan {
    pub word: String,
    pub set: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatPlan {
    pub x: String,
    pub y: String,
    pub a: String,
    pub b: String,
    /// 0 skips the p-value.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspacePlan {
    pub sets: Vec<String>,
    #[serde(default = "one")]
    pub k: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendPlan {
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub classifier_fixture: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisgenderingPlan {
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub names: Option<PathBuf>,
    #[serde(default)]
    pub pairs: Option<String>,
    #[serde(default)]
    pub full_vocabulary: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationPlan {
    #[serde(default = "default_occupation_pronouns")]
    pub pronouns: Vec<String>,
    #[serde(default = "default_occupation_groups")]
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditPlan {
    #[serde(default)]
    pub wordsets: Option<PathBuf>,
    #[serde(default)]
    pub embedding: Option<EmbeddingPlan>,
    #[serde(default)]
    pub frequency: Vec<FrequencyPlan>,
    #[serde(default)]
    pub neighbors: Vec<NeighborPlan>,
    #[serde(default)]
    pub similarity: Vec<SimilarityPlan>,
    #[serde(default)]
    pub average_similarity: Vec<AveragePlan>,
    #[serde(default)]
    pub weat: Vec<WeatPlan>,
    #[serde(default)]
    pub subspace: Vec<SubspacePlan>,
    #[serde(default)]
    pub backend: Option<BackendPlan>,
    #[serde(default)]
    pub misgendering: Option<MisgenderingPlan>,
    #[serde(default)]
    pub occupation: Option<OccupationPlan>,
    #[serde(default)]
    pub classifier: Option<ExperimentConfig>,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
    /// Set by [`AuditPlan::load`]; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    source_digest: String,
}

fn default_frequency_set() -> String {
    "pronoun_frequency".into()
}
fn default_k() -> usize {
    10
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_permutations() -> usize {
    10_000
}
fn default_parallelism() -> usize {
    8
}
fn default_occupation_pronouns() -> Vec<String> {
    ["he", "she", "they", "xe", "ze"].map(String::from).to_vec()
}
fn default_occupation_groups() -> Vec<String> {
    ["occupations_male", "occupations_female", "occupations_all"].map(String::from).to_vec()
}
fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Machine, ReportFormat::Human]
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl AuditPlan {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PlanError> {
        let mut plan: AuditPlan = toml::from_str(text).map_err(|e| PlanError::Invalid(e.to_string()))?;
        plan.base_dir = base_dir.to_path_buf();
        plan.source_digest = sha256_hex(text.as_bytes());
        if plan.formats.is_empty() {
            return Err(PlanError::Invalid("formats is empty".into()));
        }
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, PlanError> {
        let text = fs::read_to_string(path).map_err(|e| PlanError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

struct Context<'a> {
    plan: &'a AuditPlan,
    library: WordSetLibrary,
    inputs: BTreeMap<String, String>,
}

impl Context<'_> {
    fn set(&mut self, name: &str) -> Result<WordSet, PlanError> {
        let set = self.library.get(name)?.clone();
        self.inputs.insert(format!("wordset:{name}"), set.digest());
        Ok(set)
    }
}

fn corpus_fingerprint(root: &Path) -> Result<String, PlanError> {
    let mut h = Sha256::new();
    for f in corpus_files(root)? {
        let len = fs::metadata(&f).map_err(|e| PlanError::Io { path: f.clone(), source: e })?.len();
        h.update(f.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(len.to_le_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn file_digest(path: &Path) -> Result<String, PlanError> {
    let bytes = fs::read(path).map_err(|e| PlanError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Runs every measurement in the plan. The report's config digest covers
/// the plan text, the embedding digest, every word set used, corpus file
/// listings with sizes, template and name files, and backend identities.
pub fn execute_plan(plan: &AuditPlan, timestamp: &str) -> Result<AuditReport, PlanError> {
    let library = match &plan.wordsets {
        Some(p) => WordSetLibrary::bundled_with_overrides(&plan.resolve(p))?,
        None => WordSetLibrary::bundled(),
    };
    let mut cx = Context {
        plan,
        library,
        inputs: BTreeMap::new(),
    };
    cx.inputs.insert("plan".into(), plan.source_digest.clone());
    let mut sections = Sections::default();

    for f in &plan.frequency {
        let root = plan.resolve(&f.corpus);
        let lexicon = cx.set(&f.lexicon)?;
        cx.inputs
            .insert(format!("corpus:{}", root.display()), corpus_fingerprint(&root)?);
        let mut err = None;
        let report = count_frequencies(until_error(CorpusReader::open(&root, f.layout.into())?, &mut err), &lexicon);
        if let Some(e) = err {
            return Err(e.into());
        }
        sections.frequency.push(
            Measurement::new("count_frequencies", report)
                .param("corpus", root.display().to_string())
                .param("lexicon", f.lexicon.clone())
                .param(
                    "layout",
                    match f.layout {
                        PlanLayout::PerFile => "per_file",
                        PlanLayout::PerLine => "per_line",
                    },
                ),
        );
    }

    let needs_table = !(plan.neighbors.is_empty()
        && plan.similarity.is_empty()
        && plan.average_similarity.is_empty()
        && plan.weat.is_empty()
        && plan.subspace.is_empty());
    if needs_table {
        let spec = plan
            .embedding
            .as_ref()
            .ok_or_else(|| PlanError::Invalid("embedding measurements need an [embedding] table".into()))?;
        let format: EmbeddingFormat = if spec.format.is_empty() {
            EmbeddingFormat::default()
        } else {
            spec.format.parse()?
        };
        let table = EmbeddingTable::load(&plan.resolve(&spec.path), format)?;
        cx.inputs.insert("embedding".into(), table.digest());
        embedding_sections(&mut cx, &table, &mut sections)?;
    }

    let needs_backend = plan.misgendering.is_some() || plan.occupation.is_some() || plan.classifier.is_some();
    if needs_backend {
        let spec = plan
            .backend
            .as_ref()
            .ok_or_else(|| PlanError::Invalid("probe measurements need a [backend]".into()))?;
        probe_sections(&mut cx, spec, &mut sections)?;
    }

    if sections.is_empty() {
        return Err(PlanError::Invalid("plan requests no measurement".into()));
    }
    Ok(AuditReport::new(timestamp, cx.inputs, sections))
}

fn embedding_sections(cx: &mut Context, table: &EmbeddingTable, sections: &mut Sections) -> Result<(), PlanError> {
    let plan = cx.plan;
    for n in &plan.neighbors {
        let r = nearest_neighbors(table, &n.query, n.k, n.exclude_self)?;
        sections.neighbors.push(
            Measurement::new("nearest_neighbors", r)
                .param("query", n.query.clone())
                .param("k", n.k)
                .param("exclude_self", n.exclude_self),
        );
    }
    for s in &plan.similarity {
        let (rows, cols) = (cx.set(&s.rows)?, cx.set(&s.cols)?);
        sections.similarity.push(
            Measurement::new("similarity_matrix", similarity_matrix(table, &rows, &cols)?)
                .param("rows", s.rows.clone())
                .param("cols", s.cols.clone()),
        );
    }
    for a in &plan.average_similarity {
        let set = cx.set(&a.set)?;
        sections.average_similarity.push(
            Measurement::new("average_similarity", average_similarity(table, &a.word, &set)?)
                .param("word", a.word.clone())
                .param("set", a.set.clone()),
        );
    }
    for w in &plan.weat {
        let (x, y, a, b) = (cx.set(&w.x)?, cx.set(&w.y)?, cx.set(&w.a)?, cx.set(&w.b)?);
        let options = WeatOptions {
            permutations: (w.permutations > 0).then_some(w.permutations),
            seed: w.seed,
        };
        let r = weat_effect_size(table, WeatSets { x: &x, y: &y, a: &a, b: &b }, &options)?;
        sections.weat.push(
            Measurement::new("weat_effect_size", r)
                .param("permutations", w.permutations)
                .param("seed", w.seed),
        );
    }
    for s in &plan.subspace {
        if s.sets.is_empty() {
            return Err(PlanError::Invalid("subspace entry lists no sets".into()));
        }
        let mut reports = Vec::new();
        for name in &s.sets {
            let set = cx.set(name)?;
            reports.push(principal_components(table, &set, s.k)?);
        }
        sections.subspace.push(
            Measurement::new("compare_subspaces", compare_subspaces(reports)?)
                .param("sets", s.sets.clone())
                .param("k", s.k),
        );
    }
    Ok(())
}

fn probe_sections(cx: &mut Context, spec: &BackendPlan, sections: &mut Sections) -> Result<(), PlanError> {
    let plan = cx.plan;
    let client = match &spec.url {
        Some(url) => Some(ServiceClient::new(url, ClientConfig::default())?),
        None => None,
    };
    let fixture = match &spec.fixture {
        Some(p) => {
            if client.is_some() {
                return Err(PlanError::Invalid("backend takes either url or fixture, not both".into()));
            }
            Some(FixtureBackend::load(&plan.resolve(p))?)
        }
        None => None,
    };
    let scorer: Option<&dyn ScoringBackend> = match (&client, &fixture) {
        (Some(c), _) => Some(c),
        (_, Some(f)) => Some(f),
        _ => None,
    };
    let classifier_fixture = match &spec.classifier_fixture {
        Some(p) => Some(FixtureClassifier::load(&plan.resolve(p))?),
        None => None,
    };
    let classifier: Option<&dyn ClassifierBackend> = match (&classifier_fixture, &client) {
        (Some(f), _) => Some(f),
        (_, Some(c)) => Some(c),
        _ => None,
    };

    if plan.misgendering.is_some() || plan.occupation.is_some() {
        let scorer = scorer.ok_or_else(|| PlanError::Invalid("scoring needs backend.url or backend.fixture".into()))?;
        cx.inputs.insert("backend:scoring".into(), scorer.identity());

        if let Some(m) = &plan.misgendering {
            let templates = match &m.templates {
                Some(p) => {
                    let p = plan.resolve(p);
                    cx.inputs.insert("templates".into(), file_digest(&p)?);
                    load_templates(&p)?
                }
                None => bundled_templates(),
            };
            let names = match &m.names {
                Some(p) => {
                    let p = plan.resolve(p);
                    cx.inputs.insert("names".into(), file_digest(&p)?);
                    let text = fs::read_to_string(&p).map_err(|e| PlanError::Io { path: p.clone(), source: e })?;
                    parse_name_list(&text)
                }
                None => bundled_names(),
            };
            let pairs = match &m.pairs {
                Some(s) => parse_pairs(s)?,
                None => default_pairs(),
            };
            let cases = render_templates(&templates, &names, &pairs)?;
            let options = ScoreOptions {
                argmax: if m.full_vocabulary {
                    ArgmaxMode::FullVocabulary
                } else {
                    ArgmaxMode::Candidates
                },
                parallelism: spec.parallelism,
            };
            let report = score_cases(&cases, scorer, &options)?;
            let labels: Vec<String> = pairs.iter().map(|p| p.label()).collect();
            sections.probes.push(
                Measurement::new("score_cases", report)
                    .param("templates", templates.len())
                    .param("names", names.len())
                    .param("pairs", labels)
                    .param("full_vocabulary", m.full_vocabulary),
            );
        }

        if let Some(o) = &plan.occupation {
            let mut groups = Vec::new();
            for g in &o.groups {
                groups.push((g.clone(), cx.set(g)?));
            }
            let refs: Vec<(String, &WordSet)> = groups.iter().map(|(n, s)| (n.clone(), s)).collect();
            let rows = occupation_probe(&refs, &o.pronouns, scorer, spec.parallelism)?;
            sections.occupation_probes.push(
                Measurement::new("occupation_probe", rows)
                    .param("pronouns", o.pronouns.clone())
                    .param("groups", o.groups.clone()),
            );
        }
    }

    if let Some(c) = &plan.classifier {
        let backend = classifier
            .ok_or_else(|| PlanError::Invalid("classifier needs backend.url or backend.classifier_fixture".into()))?;
        cx.inputs.insert("backend:classifier".into(), backend.identity());
        let config = ExperimentConfig {
            classifiers: c
                .classifiers
                .iter()
                .map(|s| ClassifierSpec {
                    name: s.name.clone(),
                    train: plan.resolve(&s.train),
                    warmup: s.warmup.as_ref().map(|w| plan.resolve(w)),
                })
                .collect(),
            test_plural: plan.resolve(&c.test_plural),
            epochs: c.epochs,
            seed: c.seed,
        };
        cx.inputs.insert("dataset:test_plural".into(), file_digest(&config.test_plural)?);
        for s in &config.classifiers {
            cx.inputs.insert(format!("dataset:{}", s.name), file_digest(&s.train)?);
            if let Some(w) = &s.warmup {
                cx.inputs.insert(format!("dataset:{}:warmup", s.name), file_digest(w)?);
            }
        }
        let report = run_classifier_experiment(&config, backend)?;
        sections.classifier.push(
            Measurement::new("run_classifier_experiment", report)
                .param("epochs", c.epochs)
                .param("seed", c.seed),
        );
    }
    Ok(())
}
