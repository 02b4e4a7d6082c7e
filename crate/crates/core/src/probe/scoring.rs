use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::ScoringBackend;
use super::template::{ProbeCase, PronounPair};
use super::wire::{ScoreRequest, ScoreResponse};
use super::ProbeError;
use crate::corpus::MASK;
use crate::lexicon::WordSet;

/// How the predicted pronoun is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgmaxMode {
    /// Most probable candidate; ties go to the earlier candidate.
    #[default]
    Candidates,
    /// The backend's top vocabulary item.
    FullVocabulary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    pub argmax: ArgmaxMode,
    /// Concurrent backend requests.
    pub parallelism: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            argmax: ArgmaxMode::Candidates,
            parallelism: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub predicted: String,
    pub correct_probability: f64,
    /// Candidates the backend could not score; counted as probability 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unscorable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub pair: PronounPair,
    pub accuracy: f64,
    pub mean_probability: f64,
    pub case_count: usize,
    pub correct_count: usize,
    pub per_case: Vec<CaseOutcome>,
}

impl ProbeResult {
    fn from_outcomes(pair: PronounPair, per_case: Vec<CaseOutcome>) -> Self {
        let n = per_case.len();
        let correct_count = per_case.iter().filter(|c| c.predicted == pair.nominative).count();
        let total: f64 = per_case.iter().map(|c| c.correct_probability).sum();
        ProbeResult {
            accuracy: correct_count as f64 / n as f64,
            mean_probability: total / n as f64,
            case_count: n,
            correct_count,
            per_case,
            pair,
        }
    }

    /// Recomputes the aggregates from `per_case`.
    pub fn recomputed(&self) -> (f64, f64) {
        let r = ProbeResult::from_outcomes(self.pair.clone(), self.per_case.clone());
        (r.accuracy, r.mean_probability)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub argmax: ArgmaxMode,
    /// One per pronoun pair, in order of first appearance.
    pub results: Vec<ProbeResult>,
}

impl ProbeReport {
    pub fn get(&self, pair_label: &str) -> Option<&ProbeResult> {
        self.results.iter().find(|r| r.pair.label() == pair_label)
    }
}

fn check_probability(p: f64, what: &str) -> Result<f64, ProbeError> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ProbeError::InvalidResponse(format!("probability {p} for {what} outside [0, 1]")))
    }
}

/// Probability per candidate, with unscorable candidates at 0.
fn candidate_probabilities(
    prompt: &str,
    candidates: &[String],
    resp: &ScoreResponse,
) -> Result<(Vec<f64>, Vec<String>), ProbeError> {
    let mut probs = Vec::with_capacity(candidates.len());
    let mut unscorable = Vec::new();
    for c in candidates {
        match resp.candidate_probs.get(c) {
            Some(&p) => probs.push(check_probability(p, c)?),
            None if resp.unscorable.contains(c) => {
                probs.push(0.0);
                unscorable.push(c.clone());
            }
            None => {
                return Err(ProbeError::MissingCandidate {
                    prompt: prompt.to_string(),
                    candidate: c.clone(),
                })
            }
        }
    }
    Ok((probs, unscorable))
}

fn in_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T, ProbeError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ProbeError::InvalidConfig(e.to_string()))?;
    Ok(pool.install(f))
}

fn score_all(
    backend: &dyn ScoringBackend,
    requests: &[ScoreRequest],
    parallelism: usize,
) -> Result<Vec<ScoreResponse>, ProbeError> {
    in_pool(parallelism, || requests.par_iter().map(|r| backend.score(r)).collect())?
}

/// Scores every case and aggregates per pronoun pair.
///
/// Accuracy counts cases whose prediction equals the pair's nominative;
/// mean probability averages the nominative's probability over all cases.
pub fn score_cases(
    cases: &[ProbeCase],
    backend: &dyn ScoringBackend,
    options: &ScoreOptions,
) -> Result<ProbeReport, ProbeError> {
    if cases.is_empty() {
        return Err(ProbeError::EmptyInput("case list"));
    }
    for c in cases {
        if c.prompt.matches(MASK).count() != 1 {
            return Err(ProbeError::InvalidCase(format!("{}: prompt must contain one mask", c.case_id)));
        }
        if !c.candidates.contains(&c.pair.nominative) {
            return Err(ProbeError::InvalidCase(format!(
                "{}: {} is not a candidate",
                c.case_id, c.pair.nominative
            )));
        }
    }
    let top_k = match options.argmax {
        ArgmaxMode::Candidates => None,
        ArgmaxMode::FullVocabulary => Some(1),
    };
    let requests: Vec<ScoreRequest> = cases
        .iter()
        .map(|c| ScoreRequest {
            text: c.prompt.clone(),
            candidates: c.candidates.clone(),
            top_k,
        })
        .collect();
    let responses = score_all(backend, &requests, options.parallelism)?;

    let mut by_pair: Vec<(PronounPair, Vec<CaseOutcome>)> = Vec::new();
    for (case, resp) in cases.iter().zip(&responses) {
        let (probs, unscorable) = candidate_probabilities(&case.prompt, &case.candidates, resp)?;
        let predicted = match options.argmax {
            ArgmaxMode::Candidates => {
                let mut best = 0;
                for (i, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = i;
                    }
                }
                case.candidates[best].clone()
            }
            ArgmaxMode::FullVocabulary => {
                let (tok, p) = resp.top_k.first().ok_or_else(|| {
                    ProbeError::InvalidResponse(format!("{}: no top-k entries for full-vocabulary argmax", case.case_id))
                })?;
                check_probability(*p, tok)?;
                crate::corpus::case_fold(tok)
            }
        };
        let idx = case.candidates.iter().position(|c| *c == case.pair.nominative).expect("checked above");
        let outcome = CaseOutcome {
            case_id: case.case_id.clone(),
            predicted,
            correct_probability: probs[idx],
            unscorable,
        };
        match by_pair.iter_mut().find(|(p, _)| *p == case.pair) {
            Some((_, v)) => v.push(outcome),
            None => by_pair.push((case.pair.clone(), vec![outcome])),
        }
    }
    Ok(ProbeReport {
        argmax: options.argmax,
        results: by_pair.into_iter().map(|(p, v)| ProbeResult::from_outcomes(p, v)).collect(),
    })
}

/// The occupation-probe prompt: `"[MASK] is a <occupation>."`, with "are"
/// for "they".
pub fn occupation_prompt(pronoun: &str, occupation: &str) -> String {
    let verb = if pronoun == "they" { "are" } else { "is" };
    format!("{MASK} {verb} a {occupation}.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationProbeRow {
    pub pronoun: String,
    /// Mean probability of the pronoun over each group's occupations.
    pub group_scores: BTreeMap<String, f64>,
    /// Prompts where the backend could not score the pronoun (counted as 0).
    pub unscorable_prompts: usize,
}

/// For each pronoun, the mean probability at the mask over every group of
/// occupations.
pub fn occupation_probe(
    groups: &[(String, &WordSet)],
    pronouns: &[String],
    backend: &dyn ScoringBackend,
    parallelism: usize,
) -> Result<Vec<OccupationProbeRow>, ProbeError> {
    if groups.is_empty() {
        return Err(ProbeError::EmptyInput("occupation group list"));
    }
    if pronouns.is_empty() {
        return Err(ProbeError::EmptyInput("pronoun list"));
    }
    let mut folded: Vec<String> = Vec::new();
    for p in pronouns {
        let p = crate::corpus::case_fold(p.trim());
        if !folded.contains(&p) {
            folded.push(p);
        }
    }
    let pronouns = folded;

    // one request per (occupation, verb form), candidates sharing the verb
    let mut occupations: Vec<&String> = Vec::new();
    for (_, set) in groups {
        for w in set.words() {
            if !occupations.contains(&w) {
                occupations.push(w);
            }
        }
    }
    let verb_groups: Vec<Vec<String>> = [true, false]
        .iter()
        .map(|&plural| pronouns.iter().filter(|p| (*p == "they") == plural).cloned().collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();
    let mut requests = Vec::new();
    for occ in &occupations {
        for g in &verb_groups {
            requests.push(ScoreRequest {
                text: occupation_prompt(&g[0], occ),
                candidates: g.clone(),
                top_k: None,
            });
        }
    }
    let responses = score_all(backend, &requests, parallelism)?;

    let mut prob: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut unscorable: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, (req, resp)) in requests.iter().zip(&responses).enumerate() {
        let occ = occupations[i / verb_groups.len()];
        let (probs, missing) = candidate_probabilities(&req.text, &req.candidates, resp)?;
        for (c, p) in req.candidates.iter().zip(probs) {
            prob.insert((c.as_str(), occ.as_str()), p);
        }
        for c in &missing {
            let c = req.candidates.iter().find(|x| *x == c).expect("missing is a subset");
            *unscorable.entry(c.as_str()).or_default() += 1;
        }
    }

    Ok(pronouns
        .iter()
        .map(|p| OccupationProbeRow {
            pronoun: p.clone(),
            group_scores: groups
                .iter()
                .map(|(name, set)| {
                    let sum: f64 = set.words().iter().map(|o| prob[&(p.as_str(), o.as_str())]).sum();
                    (name.clone(), sum / set.len() as f64)
                })
                .collect(),
            unscorable_prompts: unscorable.get(p.as_str()).copied().unwrap_or(0),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::WordSetRole;
    use crate::probe::backend::{FixtureBackend, FixtureRecord};
    use crate::probe::template::{bundled_templates, default_pairs, render_templates};

    fn fixture(entries: &[(&str, &[(&str, f64)], &[&str])]) -> FixtureBackend {
        FixtureBackend::from_records(entries.iter().map(|(prompt, probs, unscorable)| {
            FixtureRecord::new(
                prompt,
                &ScoreResponse {
                    candidate_probs: probs.iter().map(|(c, p)| (c.to_string(), *p)).collect(),
                    top_k: probs.iter().map(|(c, p)| (c.to_string(), *p)).take(1).collect(),
                    unscorable: unscorable.iter().map(|s| s.to_string()).collect(),
                },
            )
        }))
        .unwrap()
    }

    fn case(id: &str, prompt: &str, pair: &PronounPair, candidates: &[&str]) -> ProbeCase {
        ProbeCase {
            case_id: id.into(),
            template_id: "t".into(),
            name: "Avery".into(),
            pair: pair.clone(),
            prompt: prompt.into(),
            candidates: candidates.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn perfect_fixture() {
        let pairs = default_pairs();
        let cases = render_templates(&bundled_templates()[..2], &["Avery".into()], &pairs).unwrap();
        let recs = cases.iter().map(|c| {
            let probs = c
                .candidates
                .iter()
                .map(|x| (x.clone(), if *x == c.pair.nominative { 1.0 } else { 0.0 }))
                .collect();
            FixtureRecord {
                prompt_hash: crate::probe::prompt_hash(&c.prompt),
                prompt: None,
                candidate_probs: probs,
                unscorable: vec![],
                top_k: vec![(c.pair.nominative.clone(), 1.0)],
            }
        });
        let b = FixtureBackend::from_records(recs).unwrap();
        for argmax in [ArgmaxMode::Candidates, ArgmaxMode::FullVocabulary] {
            let r = score_cases(&cases, &b, &ScoreOptions { argmax, parallelism: 3 }).unwrap();
            assert_eq!(r.results.len(), 5);
            for res in &r.results {
                assert_eq!((res.accuracy, res.mean_probability, res.case_count), (1.0, 1.0, 2));
            }
        }
    }

    #[test]
    fn four_case_arithmetic() {
        let pair = PronounPair::new("their", "they").unwrap();
        let b = fixture(&[
            ("a [MASK]", &[("they", 0.6), ("he", 0.3)], &[]),
            ("b [MASK]", &[("they", 0.6), ("he", 0.2)], &[]),
            ("c [MASK]", &[("they", 0.6), ("he", 0.1)], &[]),
            ("d [MASK]", &[("they", 0.1), ("he", 0.8)], &[]),
        ]);
        let cases: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|p| case(p, &format!("{p} [MASK]"), &pair, &["he", "they"]))
            .collect();
        let r = score_cases(&cases, &b, &ScoreOptions::default()).unwrap();
        let res = &r.results[0];
        assert_eq!(res.accuracy, 0.75);
        assert!((res.mean_probability - 0.475).abs() < 1e-15);
        assert_eq!(res.recomputed(), (res.accuracy, res.mean_probability));
        assert_eq!(res.per_case[3].predicted, "he");
    }

    #[test]
    fn unscorable_candidates_count_as_zero() {
        let pair = PronounPair::new("xir", "xe").unwrap();
        let b = fixture(&[("x [MASK]", &[("he", 0.7)], &["xe"])]);
        let r = score_cases(&[case("x", "x [MASK]", &pair, &["he", "xe"])], &b, &ScoreOptions::default()).unwrap();
        let res = &r.results[0];
        assert_eq!((res.accuracy, res.mean_probability), (0.0, 0.0));
        assert_eq!(res.per_case[0].unscorable, ["xe"]);
    }

    #[test]
    fn ties_go_to_the_first_candidate() {
        let pair = PronounPair::new("her", "she").unwrap();
        let b = fixture(&[("t [MASK]", &[("he", 0.25), ("she", 0.25)], &[])]);
        let r = score_cases(&[case("t", "t [MASK]", &pair, &["he", "she"])], &b, &ScoreOptions::default()).unwrap();
        assert_eq!(r.results[0].per_case[0].predicted, "he");
    }

    #[test]
    fn missing_and_invalid_probabilities() {
        let pair = PronounPair::new("her", "she").unwrap();
        let b = fixture(&[("m [MASK]", &[("he", 0.5)], &[]), ("n [MASK]", &[("he", 1.5), ("she", 0.1)], &[])]);
        assert!(matches!(
            score_cases(&[case("m", "m [MASK]", &pair, &["he", "she"])], &b, &ScoreOptions::default()),
            Err(ProbeError::MissingCandidate { .. })
        ));
        assert!(matches!(
            score_cases(&[case("n", "n [MASK]", &pair, &["he", "she"])], &b, &ScoreOptions::default()),
            Err(ProbeError::InvalidResponse(_))
        ));
        assert!(matches!(
            score_cases(&[case("z", "z [MASK]", &pair, &["he", "she"])], &b, &ScoreOptions::default()),
            Err(ProbeError::FixtureMiss { .. })
        ));
    }

    #[test]
    fn occupation_prompts_agree_in_number() {
        assert_eq!(occupation_prompt("they", "doctor"), "[MASK] are a doctor.");
        assert_eq!(occupation_prompt("xe", "doctor"), "[MASK] is a doctor.");
    }

    #[test]
    fn occupation_means() {
        let b = fixture(&[
            ("[MASK] is a nurse.", &[("he", 0.4), ("she", 0.3)], &[]),
            ("[MASK] is a pilot.", &[("he", 0.6), ("she", 0.1)], &[]),
            ("[MASK] are a nurse.", &[("they", 0.125)], &[]),
            ("[MASK] are a pilot.", &[("they", 0.375)], &[]),
        ]);
        let one = WordSet::new("f", WordSetRole::Occupation, ["nurse"]).unwrap();
        let two = WordSet::new("all", WordSetRole::Occupation, ["nurse", "pilot"]).unwrap();
        let pronouns: Vec<String> = vec!["he".into(), "she".into(), "they".into()];
        let rows = occupation_probe(&[("female".into(), &one), ("all".into(), &two)], &pronouns, &b, 2).unwrap();
        assert_eq!(rows[0].group_scores["female"], 0.4);
        assert_eq!(rows[0].group_scores["all"], 0.5);
        assert_eq!(rows[1].group_scores["female"], 0.3);
        assert_eq!(rows[2].group_scores["all"], 0.25);
    }
}
