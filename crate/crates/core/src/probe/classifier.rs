use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::backend::ClassifierBackend;
use super::wire::{ConfusionMatrix, EvalRequest, TrainRequest};
use super::ProbeError;
use crate::corpus::{read_dataset, DatasetRecord, PronounLabel};

/// One classifier configuration, e.g. C1 (singular vs plural "they") or C2
/// ("he" vs plural "they").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    /// Also the service run id.
    pub name: String,
    pub train: PathBuf,
    /// Optional warm-up set (e.g. "i" vs "we") trained into the same run
    /// before `train`.
    #[serde(default)]
    pub warmup: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub classifiers: Vec<ClassifierSpec>,
    /// Held-out set whose every example is plural "they".
    pub test_plural: PathBuf,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutcome {
    pub name: String,
    pub warmed_up: bool,
    pub train_examples: usize,
    pub label_set: Vec<String>,
    pub accuracy: f64,
    pub evaluated: usize,
    pub confusion_matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub test_examples: usize,
    pub classifiers: Vec<ClassifierOutcome>,
}

impl ExperimentReport {
    pub fn get(&self, name: &str) -> Option<&ClassifierOutcome> {
        self.classifiers.iter().find(|c| c.name == name)
    }
}

fn binary_labels(path: &Path, records: &[DatasetRecord]) -> Result<Vec<String>, ProbeError> {
    let labels: BTreeSet<&str> = records.iter().map(|r| r.label.as_str()).collect();
    if labels.len() != 2 {
        return Err(ProbeError::InvalidDataset(format!(
            "{}: a training set needs exactly two labels, found {:?}",
            path.display(),
            labels
        )));
    }
    Ok(labels.into_iter().map(str::to_string).collect())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Trains each configured classifier (warm-up set first, when given) and
/// evaluates it on the all-plural test set.
///
/// The backend's reported accuracy and confusion matrix are checked
/// against its per-example predictions; the report holds the recomputed
/// values.
pub fn run_classifier_experiment(
    config: &ExperimentConfig,
    backend: &dyn ClassifierBackend,
) -> Result<ExperimentReport, ProbeError> {
    if config.classifiers.is_empty() {
        return Err(ProbeError::EmptyInput("classifier list"));
    }
    let plural = PronounLabel::TheyPlural.to_string();
    let test = read_dataset(&config.test_plural)?;
    if test.is_empty() {
        return Err(ProbeError::InvalidDataset(format!("{}: empty test set", config.test_plural.display())));
    }
    if let Some(r) = test.iter().find(|r| r.label != plural) {
        return Err(ProbeError::InvalidDataset(format!(
            "{}: test set must be all {plural}, found {:?} ({})",
            config.test_plural.display(),
            r.label,
            r.doc_id
        )));
    }

    let mut outcomes = Vec::new();
    for spec in &config.classifiers {
        let train = read_dataset(&spec.train)?;
        let label_set = binary_labels(&spec.train, &train)?;
        if let Some(w) = &spec.warmup {
            let records = read_dataset(w)?;
            let labels = binary_labels(w, &records)?;
            backend.train(&TrainRequest {
                dataset_path: path_str(w),
                label_set: labels,
                epochs: config.epochs,
                seed: config.seed,
                run_id: spec.name.clone(),
            })?;
        }
        backend.train(&TrainRequest {
            dataset_path: path_str(&spec.train),
            label_set: label_set.clone(),
            epochs: config.epochs,
            seed: config.seed,
            run_id: spec.name.clone(),
        })?;
        let eval = backend.eval(&EvalRequest {
            run_id: spec.name.clone(),
            dataset_path: path_str(&config.test_plural),
        })?;

        if eval.predictions.len() != test.len() {
            return Err(ProbeError::InconsistentEval(format!(
                "{}: {} predictions for {} examples",
                spec.name,
                eval.predictions.len(),
                test.len()
            )));
        }
        let matrix = ConfusionMatrix::from_pairs(
            test.iter().map(|r| r.label.as_str()).zip(eval.predictions.iter().map(String::as_str)),
        );
        let accuracy = matrix.correct() as f64 / test.len() as f64;
        let reported = &eval.confusion_matrix;
        let all_labels: BTreeSet<&String> = matrix.labels.iter().chain(&reported.labels).collect();
        let same_matrix = reported.total() == matrix.total()
            && all_labels
                .iter()
                .all(|t| all_labels.iter().all(|p| reported.get(t, p) == matrix.get(t, p)));
        if !same_matrix {
            return Err(ProbeError::InconsistentEval(format!(
                "{}: reported confusion matrix does not match the predictions",
                spec.name
            )));
        }
        if (eval.accuracy - accuracy).abs() > 1e-9 {
            return Err(ProbeError::InconsistentEval(format!(
                "{}: reported accuracy {} but predictions give {accuracy}",
                spec.name, eval.accuracy
            )));
        }
        outcomes.push(ClassifierOutcome {
            name: spec.name.clone(),
            warmed_up: spec.warmup.is_some(),
            train_examples: train.len(),
            label_set,
            accuracy,
            evaluated: test.len(),
            confusion_matrix: matrix,
        });
    }
    Ok(ExperimentReport {
        test_examples: test.len(),
        classifiers: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_dataset, Split};
    use crate::probe::backend::{example_hash, ClassifierFixtureRecord, FixtureClassifier};
    use crate::probe::wire::{EvalResponse, TrainResponse};

    fn record(i: usize, label: &str) -> DatasetRecord {
        DatasetRecord {
            doc_id: format!("d{i}"),
            sentence_prev: format!("Ann and Bo met {i}."),
            sentence_target: format!("They left {i}."),
            masked_target: format!("[MASK] left {i}."),
            pronoun: "They".into(),
            label: label.into(),
            split: Split::Test,
        }
    }

    struct Setup {
        _dir: tempfile::TempDir,
        config: ExperimentConfig,
        test: Vec<DatasetRecord>,
    }

    fn setup(with_warmup: bool) -> Setup {
        let dir = tempfile::tempdir().unwrap();
        let test: Vec<_> = (0..10).map(|i| record(i, "they_plural")).collect();
        let train: Vec<_> = (0..4)
            .map(|i| record(100 + i, if i % 2 == 0 { "they_plural" } else { "they_singular" }))
            .collect();
        let warm: Vec<_> = (0..4).map(|i| record(200 + i, if i % 2 == 0 { "i" } else { "we" })).collect();
        let p = |n: &str| dir.path().join(n);
        write_dataset(&p("test.jsonl"), &test).unwrap();
        write_dataset(&p("train.jsonl"), &train).unwrap();
        write_dataset(&p("warm.jsonl"), &warm).unwrap();
        let config = ExperimentConfig {
            classifiers: vec![ClassifierSpec {
                name: "C1".into(),
                train: p("train.jsonl"),
                warmup: with_warmup.then(|| p("warm.jsonl")),
            }],
            test_plural: p("test.jsonl"),
            epochs: 1,
            seed: 0,
        };
        Setup { _dir: dir, config, test }
    }

    fn predicting(test: &[DatasetRecord], plural_count: usize) -> FixtureClassifier {
        FixtureClassifier::from_records(test.iter().enumerate().map(|(i, r)| ClassifierFixtureRecord {
            run_id: "C1".into(),
            example_hash: example_hash(&r.sentence_prev, &r.masked_target),
            predicted: if i < plural_count { "they_plural" } else { "they_singular" }.into(),
        }))
    }

    #[test]
    fn seven_of_ten_plural() {
        let s = setup(false);
        let report = run_classifier_experiment(&s.config, &predicting(&s.test, 7)).unwrap();
        let c1 = report.get("C1").unwrap();
        assert_eq!(c1.accuracy, 0.7);
        assert_eq!(c1.confusion_matrix.get("they_plural", "they_plural"), 7);
        assert_eq!(c1.confusion_matrix.get("they_plural", "they_singular"), 3);
        assert_eq!(c1.label_set, ["they_plural", "they_singular"]);
    }

    #[test]
    fn perfect_classifier() {
        let s = setup(false);
        let report = run_classifier_experiment(&s.config, &predicting(&s.test, 10)).unwrap();
        assert_eq!(report.classifiers[0].accuracy, 1.0);
    }

    #[test]
    fn warmup_trains_the_same_run_first() {
        let s = setup(true);
        let backend = predicting(&s.test, 5);
        run_classifier_experiment(&s.config, &backend).unwrap();
        let log = backend.training_log();
        assert_eq!(log.len(), 2);
        assert!(log[0].dataset_path.ends_with("warm.jsonl"));
        assert_eq!(log[0].label_set, ["i", "we"]);
        assert_eq!(log[0].run_id, log[1].run_id);
    }

    #[test]
    fn test_set_must_be_plural() {
        let s = setup(false);
        write_dataset(&s.config.test_plural, &[record(1, "he")]).unwrap();
        assert!(matches!(
            run_classifier_experiment(&s.config, &predicting(&s.test, 1)),
            Err(ProbeError::InvalidDataset(_))
        ));
    }

    struct Liar;
    impl ClassifierBackend for Liar {
        fn train(&self, r: &TrainRequest) -> Result<TrainResponse, ProbeError> {
            Ok(TrainResponse { run_id: r.run_id.clone(), extra: Default::default() })
        }
        fn eval(&self, _: &EvalRequest) -> Result<EvalResponse, ProbeError> {
            let preds = vec!["they_plural".to_string(); 10];
            Ok(EvalResponse {
                accuracy: 0.5,
                confusion_matrix: ConfusionMatrix::from_pairs(std::iter::repeat_n(("they_plural", "they_plural"), 10)),
                predictions: preds,
                extra: Default::default(),
            })
        }
        fn identity(&self) -> String {
            "liar".into()
        }
    }

    #[test]
    fn inconsistent_backend_is_rejected() {
        let s = setup(false);
        assert!(matches!(run_classifier_experiment(&s.config, &Liar), Err(ProbeError::InconsistentEval(_))));
    }
}
