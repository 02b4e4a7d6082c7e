//! `audit`: command-line front end for the gender audit toolkit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gender_audit::corpus::{
    count_frequencies, export_classifier_dataset, import_verified, mine_plural_they, mine_pronoun_sentences,
    read_pairs, single_class_dataset, until_error, write_dataset, write_pairs, CorpusError, CorpusReader,
    DatasetConfig, DocLayout, Document, HeuristicDetector, MinedPair, PersonDetector, PronounLabel, Split,
};
use gender_audit::embedding::{
    nearest_neighbors, similarity_matrix, weat_effect_size, EmbeddingFormat, EmbeddingTable, WeatOptions, WeatSets,
};
use gender_audit::lexicon::{bundled_names, parse_name_list, WordSet, WordSetLibrary};
use gender_audit::probe::{
    bundled_templates, default_pairs, load_templates, occupation_probe, parse_pairs, render_templates,
    run_classifier_experiment, score_cases, ArgmaxMode, ClassifierBackend, ClientConfig, ExperimentConfig,
    FixtureBackend, FixtureClassifier, RecordingBackend, ScoreOptions, ScoringBackend, ServiceClient,
};
use gender_audit::report::{
    emit_report, execute_plan, render_human, render_machine, AuditPlan, AuditReport, Measurement, ReportFormat,
    Sections,
};
use gender_audit::subspace::{compare_subspaces, principal_components};

#[derive(Parser)]
#[command(name = "audit", version, about = "Audit gendered language in corpora, embeddings and masked LMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Directory for report files; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "machine")]
    format: FormatArg,
    /// Report timestamp; defaults to the current UTC time.
    #[arg(long)]
    timestamp: Option<String>,
    /// Word-set file overriding or extending the bundled sets.
    #[arg(long)]
    wordsets: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum FormatArg {
    Machine,
    Human,
    Both,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Corpus file or directory of plain-text files.
    #[arg(long)]
    corpus: PathBuf,
    /// Treat each non-empty line as a document.
    #[arg(long)]
    per_line: bool,
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// plain (GloVe) or headered (word2vec text).
    #[arg(long, default_value = "plain")]
    embedding_format: EmbeddingFormat,
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// Service URL, or fixture:FILE for recorded responses.
    #[arg(long)]
    backend: String,
    #[arg(long, default_value_t = 8)]
    parallelism: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Pronoun frequencies over a corpus.
    Freq {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = "pronoun_frequency")]
        lexicon: String,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Mine plural "they" sentence pairs.
    MinePlural {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Output JSONL of mined pairs.
        #[arg(long)]
        out: PathBuf,
        /// Person-tagging endpoint base URL; the built-in heuristic otherwise.
        #[arg(long)]
        ner: Option<String>,
        /// Keep at most this many pairs, in corpus order.
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long)]
        wordsets: Option<PathBuf>,
    },
    /// Mine sentence pairs whose target sentence has one given pronoun.
    MinePronoun {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        pronoun: String,
        /// he, she, they_singular or they_plural.
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long)]
        wordsets: Option<PathBuf>,
    },
    /// Keep the reviewed pairs marked "verified": true, re-validating each.
    ImportVerified {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ner: Option<String>,
        #[arg(long)]
        wordsets: Option<PathBuf>,
    },
    /// Export classifier datasets from mined pairs.
    Dataset {
        /// Pairs of the first class.
        #[arg(long)]
        pos: PathBuf,
        /// Pairs of the second class; without it, a single-class file is written.
        #[arg(long)]
        neg: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Split for a single-class file.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Nearest neighbours of query words.
    Neighbors {
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[arg(long, required = true, num_args = 1..)]
        query: Vec<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Keep the query token among its own neighbours.
        #[arg(long)]
        include_self: bool,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Cosine matrix between two word sets.
    Simmatrix {
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[arg(long)]
        rows: String,
        #[arg(long)]
        cols: String,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Association test between two target and two attribute sets.
    Weat {
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// 0 skips the p-value.
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Principal components of word sets and distances between them.
    Subspace {
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[arg(long, required = true, value_delimiter = ',')]
        sets: Vec<String>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Misgendering template battery.
    ProbeMisgender {
        #[command(flatten)]
        backend: BackendArgs,
        /// Template JSONL; the bundled templates otherwise.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Name list, one per line; the bundled names otherwise.
        #[arg(long)]
        names: Option<PathBuf>,
        /// Comma-separated possessive:nominative pairs.
        #[arg(long)]
        pairs: Option<String>,
        /// Predict the top vocabulary token instead of the best candidate.
        #[arg(long)]
        full_vocab: bool,
        /// Save every exchange as a fixture file.
        #[arg(long)]
        record: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Pronoun probabilities for occupation prompts.
    ProbeOccupation {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, value_delimiter = ',', default_value = "he,she,they,xe,ze")]
        pronouns: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "occupations_male,occupations_female,occupations_all")]
        groups: Vec<String>,
        #[arg(long)]
        record: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Pronoun-number classifier experiments.
    ClassifierExp {
        /// Service URL, or fixture:FILE for recorded predictions.
        #[arg(long)]
        backend: String,
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Execute a declarative audit plan.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timestamp: Option<String>,
    },
}

fn library(path: Option<&Path>) -> Result<WordSetLibrary> {
    Ok(match path {
        Some(p) => WordSetLibrary::bundled_with_overrides(p)?,
        None => WordSetLibrary::bundled(),
    })
}

fn timestamp(arg: Option<&str>) -> String {
    arg.map(str::to_string)
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

/// Collects the inputs a single-operation report depends on.
struct Inputs {
    lib: WordSetLibrary,
    map: BTreeMap<String, String>,
}

impl Inputs {
    fn new(wordsets: Option<&Path>) -> Result<Self> {
        Ok(Inputs {
            lib: library(wordsets)?,
            map: BTreeMap::new(),
        })
    }

    fn set(&mut self, name: &str) -> Result<WordSet> {
        let s = self.lib.get(name)?.clone();
        self.map.insert(format!("wordset:{name}"), s.digest());
        Ok(s)
    }

    fn table(&mut self, args: &EmbeddingArgs) -> Result<EmbeddingTable> {
        let t = EmbeddingTable::load(&args.embeddings, args.embedding_format)?;
        self.map.insert("embedding".into(), t.digest());
        Ok(t)
    }
}

fn emit(args: &ReportArgs, inputs: Inputs, sections: Sections) -> Result<()> {
    let report = AuditReport::new(timestamp(args.timestamp.as_deref()), inputs.map, sections);
    write_report(&report, args.out.as_deref(), args.format)
}

fn write_report(report: &AuditReport, out: Option<&Path>, format: FormatArg) -> Result<()> {
    let formats = match format {
        FormatArg::Machine => vec![ReportFormat::Machine],
        FormatArg::Human => vec![ReportFormat::Human],
        FormatArg::Both => vec![ReportFormat::Machine, ReportFormat::Human],
    };
    for f in formats {
        match out {
            Some(dir) => {
                emit_report(report, f, dir)?;
            }
            None => match f {
                ReportFormat::Machine => print!("{}", render_machine(report)?),
                ReportFormat::Human => print!("{}", render_human(report)?),
            },
        }
    }
    Ok(())
}

fn documents(args: &CorpusArgs) -> Result<CorpusReader> {
    let layout = if args.per_line {
        DocLayout::PerLine
    } else {
        DocLayout::PerFile
    };
    Ok(CorpusReader::open(&args.corpus, layout)?)
}

/// Runs `f` over the corpus stream and surfaces the first read error.
fn with_documents<T>(args: &CorpusArgs, f: impl FnOnce(&mut dyn Iterator<Item = Document>) -> Result<T>) -> Result<T> {
    let reader = documents(args)?;
    let mut err: Option<CorpusError> = None;
    let out = f(&mut until_error(reader, &mut err))?;
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(out)
}

fn detector(ner: Option<&str>) -> Result<Box<dyn PersonDetector>> {
    Ok(match ner {
        Some(url) => Box::new(ServiceClient::new(url, ClientConfig::default())?),
        None => Box::new(HeuristicDetector),
    })
}

fn truncate(mut pairs: Vec<MinedPair>, max: Option<usize>) -> Vec<MinedPair> {
    if let Some(m) = max {
        pairs.truncate(m);
    }
    pairs
}

enum Scorer {
    Service(ServiceClient),
    Fixture(FixtureBackend),
}

impl Scorer {
    fn open(spec: &str) -> Result<Self> {
        Ok(match spec.strip_prefix("fixture:") {
            Some(path) => Scorer::Fixture(FixtureBackend::load(Path::new(path))?),
            None => Scorer::Service(ServiceClient::new(spec, ClientConfig::default())?),
        })
    }

    fn backend(&self) -> &dyn ScoringBackend {
        match self {
            Scorer::Service(s) => s,
            Scorer::Fixture(f) => f,
        }
    }
}

fn run_scoring<T>(
    args: &BackendArgs,
    record: Option<&Path>,
    inputs: &mut Inputs,
    f: impl FnOnce(&dyn ScoringBackend) -> Result<T>,
) -> Result<T> {
    let scorer = Scorer::open(&args.backend)?;
    let inner = scorer.backend();
    inputs.map.insert("backend:scoring".into(), inner.identity());
    match record {
        Some(path) => {
            let rec = RecordingBackend::new(inner);
            let out = f(&rec)?;
            rec.write(path)?;
            Ok(out)
        }
        None => f(inner),
    }
}

fn file_digest(path: &Path) -> Result<String> {
    use sha2::Digest;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(sha2::Sha256::digest(&bytes)))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Freq { corpus, lexicon, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let lex = inputs.set(&lexicon)?;
            inputs
                .map
                .insert("corpus".into(), corpus.corpus.display().to_string());
            let result = with_documents(&corpus, |docs| Ok(count_frequencies(docs, &lex)))?;
            let m = Measurement::new("count_frequencies", result)
                .param("corpus", corpus.corpus.display().to_string())
                .param("lexicon", lexicon)
                .param("per_line", corpus.per_line);
            emit(&report, inputs, Sections { frequency: vec![m], ..Default::default() })
        }
        Command::MinePlural { corpus, out, ner, max_pairs, wordsets } => {
            let lib = library(wordsets.as_deref())?;
            let lex = lib.get("mining_pronouns")?;
            let det = detector(ner.as_deref())?;
            let pairs = with_documents(&corpus, |docs| Ok(mine_plural_they(docs, lex, det.as_ref())?))?;
            let pairs = truncate(pairs, max_pairs);
            write_pairs(&out, &pairs)?;
            eprintln!("{} pairs written to {}", pairs.len(), out.display());
            Ok(())
        }
        Command::MinePronoun { corpus, pronoun, label, out, max_pairs, wordsets } => {
            let lib = library(wordsets.as_deref())?;
            let lex = lib.get("mining_pronouns")?;
            let label: PronounLabel = label.parse()?;
            let pairs = with_documents(&corpus, |docs| Ok(mine_pronoun_sentences(docs, &pronoun, lex, label)?))?;
            let pairs = truncate(pairs, max_pairs);
            write_pairs(&out, &pairs)?;
            eprintln!("{} pairs written to {}", pairs.len(), out.display());
            Ok(())
        }
        Command::ImportVerified { input, out, ner, wordsets } => {
            let lib = library(wordsets.as_deref())?;
            let det = detector(ner.as_deref())?;
            let pairs = import_verified(&input, lib.get("mining_pronouns")?, det.as_ref())?;
            write_pairs(&out, &pairs)?;
            eprintln!("{} verified pairs written to {}", pairs.len(), out.display());
            Ok(())
        }
        Command::Dataset { pos, neg, out, seed, train_fraction, split } => {
            let pos_pairs = read_pairs(&pos)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            match neg {
                Some(neg) => {
                    let config = DatasetConfig { seed, train_fraction };
                    let ds = export_classifier_dataset(&pos_pairs, &read_pairs(&neg)?, &config)?;
                    let files = ds.write(&out)?;
                    eprintln!(
                        "{} examples written to {} and {}",
                        ds.len(),
                        files.train.display(),
                        files.test.display()
                    );
                }
                None => {
                    let split = match split.as_str() {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        other => bail!("unknown split {other:?}"),
                    };
                    let records = single_class_dataset(&pos_pairs, split)?;
                    let path = out.join(format!("{}.jsonl", if split == Split::Train { "train" } else { "test" }));
                    write_dataset(&path, &records)?;
                    eprintln!("{} examples written to {}", records.len(), path.display());
                }
            }
            Ok(())
        }
        Command::Neighbors { embedding, query, k, include_self, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let table = inputs.table(&embedding)?;
            let mut ms = Vec::new();
            for q in query {
                let r = nearest_neighbors(&table, &q, k, !include_self)?;
                ms.push(
                    Measurement::new("nearest_neighbors", r)
                        .param("query", q)
                        .param("k", k)
                        .param("exclude_self", !include_self),
                );
            }
            emit(&report, inputs, Sections { neighbors: ms, ..Default::default() })
        }
        Command::Simmatrix { embedding, rows, cols, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let table = inputs.table(&embedding)?;
            let (r, c) = (inputs.set(&rows)?, inputs.set(&cols)?);
            let m = Measurement::new("similarity_matrix", similarity_matrix(&table, &r, &c)?)
                .param("rows", rows)
                .param("cols", cols);
            emit(&report, inputs, Sections { similarity: vec![m], ..Default::default() })
        }
        Command::Weat { embedding, x, y, a, b, permutations, seed, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let table = inputs.table(&embedding)?;
            let (sx, sy, sa, sb) = (inputs.set(&x)?, inputs.set(&y)?, inputs.set(&a)?, inputs.set(&b)?);
            let options = WeatOptions {
                permutations: (permutations > 0).then_some(permutations),
                seed,
            };
            let r = weat_effect_size(&table, WeatSets { x: &sx, y: &sy, a: &sa, b: &sb }, &options)?;
            let m = Measurement::new("weat_effect_size", r)
                .param("permutations", permutations)
                .param("seed", seed);
            emit(&report, inputs, Sections { weat: vec![m], ..Default::default() })
        }
        Command::Subspace { embedding, sets, k, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let table = inputs.table(&embedding)?;
            let mut reports = Vec::new();
            for name in &sets {
                let s = inputs.set(name)?;
                reports.push(principal_components(&table, &s, k)?);
            }
            let m = Measurement::new("compare_subspaces", compare_subspaces(reports)?)
                .param("sets", sets)
                .param("k", k);
            emit(&report, inputs, Sections { subspace: vec![m], ..Default::default() })
        }
        Command::ProbeMisgender { backend, templates, names, pairs, full_vocab, record, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let templates = match &templates {
                Some(p) => {
                    inputs.map.insert("templates".into(), file_digest(p)?);
                    load_templates(p)?
                }
                None => bundled_templates(),
            };
            let names = match &names {
                Some(p) => {
                    inputs.map.insert("names".into(), file_digest(p)?);
                    parse_name_list(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                }
                None => bundled_names(),
            };
            let pairs = match &pairs {
                Some(s) => parse_pairs(s)?,
                None => default_pairs(),
            };
            let cases = render_templates(&templates, &names, &pairs)?;
            let options = ScoreOptions {
                argmax: if full_vocab {
                    ArgmaxMode::FullVocabulary
                } else {
                    ArgmaxMode::Candidates
                },
                parallelism: backend.parallelism,
            };
            let result =
                run_scoring(&backend, record.as_deref(), &mut inputs, |b| Ok(score_cases(&cases, b, &options)?))?;
            let labels: Vec<String> = pairs.iter().map(|p| p.label()).collect();
            let m = Measurement::new("score_cases", result)
                .param("templates", templates.len())
                .param("names", names.len())
                .param("pairs", labels)
                .param("full_vocabulary", full_vocab);
            emit(&report, inputs, Sections { probes: vec![m], ..Default::default() })
        }
        Command::ProbeOccupation { backend, pronouns, groups, record, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let mut sets = Vec::new();
            for g in &groups {
                sets.push((g.clone(), inputs.set(g)?));
            }
            let refs: Vec<(String, &WordSet)> = sets.iter().map(|(n, s)| (n.clone(), s)).collect();
            let rows = run_scoring(&backend, record.as_deref(), &mut inputs, |b| {
                Ok(occupation_probe(&refs, &pronouns, b, backend.parallelism)?)
            })?;
            let m = Measurement::new("occupation_probe", rows)
                .param("pronouns", pronouns)
                .param("groups", groups);
            emit(&report, inputs, Sections { occupation_probes: vec![m], ..Default::default() })
        }
        Command::ClassifierExp { backend, config, report } => {
            let mut inputs = Inputs::new(report.wordsets.as_deref())?;
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg: ExperimentConfig =
                toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new(""));
            let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            cfg.test_plural = resolve(&cfg.test_plural);
            for c in &mut cfg.classifiers {
                c.train = resolve(&c.train);
                c.warmup = c.warmup.as_deref().map(resolve);
            }
            inputs.map.insert("experiment".into(), file_digest(&config)?);
            let service;
            let fixture;
            let b: &dyn ClassifierBackend = match backend.strip_prefix("fixture:") {
                Some(path) => {
                    fixture = FixtureClassifier::load(Path::new(path))?;
                    &fixture
                }
                None => {
                    service = ServiceClient::new(&backend, ClientConfig::default())?;
                    &service
                }
            };
            inputs.map.insert("backend:classifier".into(), b.identity());
            let result = run_classifier_experiment(&cfg, b)?;
            let m = Measurement::new("run_classifier_experiment", result)
                .param("epochs", cfg.epochs)
                .param("seed", cfg.seed);
            emit(&report, inputs, Sections { classifier: vec![m], ..Default::default() })
        }
        Command::Run { config, out, timestamp: ts } => {
            let plan = AuditPlan::load(&config)?;
            let report = execute_plan(&plan, &timestamp(ts.as_deref()))?;
            for f in &plan.formats {
                let path = emit_report(&report, *f, &out)?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            let record = serde_json::json!({ "error": e.to_string(), "causes": causes });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
