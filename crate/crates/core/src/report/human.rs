use std::fmt::Write;

use super::{AuditReport, Measurement, ReportError};

/// Fixed-point for ordinary magnitudes, scientific for tiny ones.
fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || v.abs() >= 1e-3 {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "n/a".into())
}

fn row(cells: impl IntoIterator<Item = String>) -> String {
    let cells: Vec<String> = cells.into_iter().map(|c| c.replace('|', "\\|")).collect();
    format!("| {} |\n", cells.join(" | "))
}

fn header(cols: &[&str]) -> String {
    let mut s = row(cols.iter().map(|c| c.to_string()));
    s += &row(cols.iter().map(|_| "---".to_string()));
    s
}

fn params<T>(m: &Measurement<T>) -> String {
    if m.parameters.is_empty() {
        return format!("`{}`\n\n", m.operation);
    }
    let p: Vec<String> = m.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("`{}` ({})\n\n", m.operation, p.join(", "))
}

fn missing(words: &[String]) -> String {
    if words.is_empty() {
        String::new()
    } else {
        format!("\nMissing from vocabulary: {}\n", words.join(", "))
    }
}

/// Markdown rendering: one table per measurement.
pub fn render_human(report: &AuditReport) -> Result<String, ReportError> {
    let s = &report.sections;
    if s.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# Gender audit report\n");
    let _ = writeln!(w, "- tool version: {}", report.tool_version);
    let _ = writeln!(w, "- timestamp: {}", report.timestamp);
    let _ = writeln!(w, "- config digest: `{}`", report.config_digest);
    for (k, v) in &report.inputs {
        let _ = writeln!(w, "- input `{k}`: `{v}`");
    }
    w.push('\n');

    if !s.frequency.is_empty() {
        w.push_str("## Pronoun frequency\n\n");
        for m in &s.frequency {
            w.push_str(&params(m));
            w.push_str(&header(&["word", "count", "per million tokens"]));
            for (word, c) in &m.result.counts {
                w.push_str(&row([word.clone(), c.to_string(), num(m.result.rates[word])]));
            }
            let _ = writeln!(w, "\nTotal tokens: {}\n", m.result.total_tokens);
        }
    }

    if !s.neighbors.is_empty() {
        w.push_str("## Nearest neighbours\n\n");
        for m in &s.neighbors {
            w.push_str(&params(m));
            let _ = writeln!(w, "Query: **{}**\n", m.result.query);
            w.push_str(&header(&["rank", "word", "cosine"]));
            for (i, (tok, c)) in m.result.neighbors.iter().enumerate() {
                w.push_str(&row([(i + 1).to_string(), tok.clone(), num(*c)]));
            }
            w.push('\n');
        }
    }

    if !s.similarity.is_empty() {
        w.push_str("## Cosine similarity\n\n");
        for m in &s.similarity {
            w.push_str(&params(m));
            let r = &m.result;
            let mut cols = vec![String::new()];
            cols.extend(r.col_words.iter().cloned());
            w.push_str(&row(cols.clone()));
            w.push_str(&row(cols.iter().map(|_| "---".to_string())));
            for (word, vals) in r.row_words.iter().zip(&r.values) {
                let mut cells = vec![word.clone()];
                cells.extend(vals.iter().map(|v| num(*v)));
                w.push_str(&row(cells));
            }
            w.push_str(&missing(&r.missing_words));
            w.push('\n');
        }
    }

    if !s.average_similarity.is_empty() {
        w.push_str("## Average similarity\n\n");
        w.push_str(&header(&["word", "operation", "mean", "mean |cos|", "resolved"]));
        for m in &s.average_similarity {
            let r = &m.result;
            w.push_str(&row([
                r.word.clone(),
                m.operation.clone(),
                num(r.mean),
                num(r.abs_mean),
                r.resolved.to_string(),
            ]));
        }
        w.push('\n');
    }

    if !s.weat.is_empty() {
        w.push_str("## Association tests\n\n");
        w.push_str(&header(&["X", "Y", "A", "B", "S", "effect size", "p-value", "permutations"]));
        for m in &s.weat {
            let r = &m.result;
            let perms = match (r.exhaustive, r.permutations_run) {
                (true, Some(n)) => format!("{n} (exhaustive)"),
                (_, Some(n)) => n.to_string(),
                (_, None) => "n/a".into(),
            };
            w.push_str(&row([
                r.x.clone(),
                r.y.clone(),
                r.a.clone(),
                r.b.clone(),
                num(r.statistic),
                num(r.effect_size),
                opt(r.p_value),
                perms,
            ]));
        }
        let missing_all: Vec<String> = s.weat.iter().flat_map(|m| m.result.missing_words.clone()).collect();
        w.push_str(&missing(&missing_all));
        w.push('\n');
    }

    if !s.subspace.is_empty() {
        w.push_str("## Gender subspaces\n\n");
        for m in &s.subspace {
            w.push_str(&params(m));
            w.push_str(&header(&["set", "words", "component", "variance", "ratio"]));
            for sub in &m.result.subspaces {
                for (i, (v, r)) in sub.explained_variance.iter().zip(&sub.explained_variance_ratio).enumerate() {
                    w.push_str(&row([
                        sub.set_name.clone(),
                        sub.words_used.len().to_string(),
                        (i + 1).to_string(),
                        num(*v),
                        num(*r),
                    ]));
                }
            }
            let names: Vec<&String> = m.result.distances.keys().collect();
            if !names.is_empty() {
                w.push_str("\nDistance between first components (1 - cos):\n\n");
                let mut cols = vec![String::new()];
                cols.extend(names.iter().map(|n| n.to_string()));
                w.push_str(&row(cols.clone()));
                w.push_str(&row(cols.iter().map(|_| "---".to_string())));
                for a in &names {
                    let mut cells = vec![a.to_string()];
                    cells.extend(names.iter().map(|b| num(m.result.distances[*a][*b])));
                    w.push_str(&row(cells));
                }
            }
            w.push('\n');
        }
    }

    if !s.occupation_probes.is_empty() {
        w.push_str("## Occupation probe\n\n");
        for m in &s.occupation_probes {
            w.push_str(&params(m));
            let groups: Vec<String> = m
                .result
                .first()
                .map(|r| r.group_scores.keys().cloned().collect())
                .unwrap_or_default();
            let mut cols = vec!["pronoun".to_string()];
            cols.extend(groups.iter().cloned());
            cols.push("unscorable prompts".into());
            w.push_str(&row(cols.clone()));
            w.push_str(&row(cols.iter().map(|_| "---".to_string())));
            for r in &m.result {
                let mut cells = vec![r.pronoun.clone()];
                cells.extend(groups.iter().map(|g| opt(r.group_scores.get(g).copied())));
                cells.push(r.unscorable_prompts.to_string());
                w.push_str(&row(cells));
            }
            w.push('\n');
        }
    }

    if !s.probes.is_empty() {
        w.push_str("## Misgendering probe\n\n");
        for m in &s.probes {
            w.push_str(&params(m));
            w.push_str(&header(&["pair", "accuracy", "mean probability", "cases"]));
            for r in &m.result.results {
                w.push_str(&row([
                    r.pair.label(),
                    num(r.accuracy),
                    num(r.mean_probability),
                    r.case_count.to_string(),
                ]));
            }
            w.push('\n');
        }
    }

    if !s.classifier.is_empty() {
        w.push_str("## Pronoun-number classifiers\n\n");
        for m in &s.classifier {
            w.push_str(&params(m));
            let _ = writeln!(w, "Test examples (all plural): {}\n", m.result.test_examples);
            w.push_str(&header(&["classifier", "labels", "warm-up", "train examples", "accuracy"]));
            for c in &m.result.classifiers {
                w.push_str(&row([
                    c.name.clone(),
                    c.label_set.join(" / "),
                    if c.warmed_up { "yes" } else { "no" }.to_string(),
                    c.train_examples.to_string(),
                    num(c.accuracy),
                ]));
            }
            w.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::NeighborResult;
    use crate::report::Sections;

    #[test]
    fn number_format() {
        assert_eq!(num(0.5), "0.5000");
        assert_eq!(num(0.0), "0.0000");
        assert_eq!(num(2.5e-5), "2.500e-5");
    }

    #[test]
    fn neighbour_table() {
        let n = NeighborResult {
            query: "they".into(),
            neighbors: vec![("we".into(), 0.8), ("you".into(), 0.7)],
        };
        let sections = Sections {
            neighbors: vec![Measurement::new("nearest_neighbors", n).param("k", 2)],
            ..Default::default()
        };
        let r = AuditReport::new("t", Default::default(), sections);
        let md = render_human(&r).unwrap();
        assert!(md.contains("| 1 | we | 0.8000 |"));
        assert!(md.contains("`nearest_neighbors` (k=2)"));
        assert!(!md.contains("Association"));
    }
}
