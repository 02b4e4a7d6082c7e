use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingTable};
use crate::lexicon::WordSet;

pub(crate) fn dot<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum()
}

pub(crate) fn l2_norm<T: Copy + Into<f64>>(u: &[T]) -> f64 {
    u.iter().map(|&a| {
        let a: f64 = a.into();
        a * a
    })
    .sum::<f64>()
    .sqrt()
}

/// Cosine from a precomputed dot product and norms, clamped to [-1, 1].
pub(crate) fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0)
}

/// `u·v / (‖u‖‖v‖)`, clamped to [-1, 1] against rounding.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector("<argument>".into()));
    }
    Ok(cosine_from_parts(dot(u, v), nu, nv))
}

/// Cosine between two table words.
pub fn word_cosine(table: &EmbeddingTable, a: &str, b: &str) -> Result<f64, EmbeddingError> {
    let (u, nu) = table.lookup(a)?;
    let (v, nv) = table.lookup(b)?;
    Ok(cosine_from_parts(dot(u, v), nu, nv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub row_words: Vec<String>,
    pub col_words: Vec<String>,
    /// `values[i][j]` is the cosine of `row_words[i]` and `col_words[j]`.
    pub values: Vec<Vec<f64>>,
    /// Requested words absent from the table (dropped).
    pub missing_words: Vec<String>,
}

impl SimilarityMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.row_words.iter().position(|w| w == row)?;
        let j = self.col_words.iter().position(|w| w == col)?;
        Some(self.values[i][j])
    }
}

fn resolve(table: &EmbeddingTable, set: &WordSet, missing: &mut Vec<String>) -> Vec<String> {
    let mut out = Vec::new();
    for w in set.words() {
        if table.contains(w) {
            out.push(w.clone());
        } else if !missing.contains(w) {
            missing.push(w.clone());
        }
    }
    out
}

/// Pairwise cosines between two word sets, in input order. Words missing
/// from the table are dropped and listed in `missing_words`.
pub fn similarity_matrix(
    table: &EmbeddingTable,
    rows: &WordSet,
    cols: &WordSet,
) -> Result<SimilarityMatrix, EmbeddingError> {
    let mut missing = Vec::new();
    let row_words = resolve(table, rows, &mut missing);
    let col_words = resolve(table, cols, &mut missing);
    if row_words.is_empty() {
        return Err(EmbeddingError::NoResolvableWords(rows.name().to_string()));
    }
    if col_words.is_empty() {
        return Err(EmbeddingError::NoResolvableWords(cols.name().to_string()));
    }
    let values = row_words
        .iter()
        .map(|r| {
            col_words
                .iter()
                .map(|c| word_cosine(table, r, c))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimilarityMatrix {
        row_words,
        col_words,
        values,
        missing_words: missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageSimilarity {
    pub word: String,
    pub mean: f64,
    pub abs_mean: f64,
    /// Number of set words that contributed.
    pub resolved: usize,
    pub missing_words: Vec<String>,
}

/// Mean cosine and mean absolute cosine between `word` and the resolvable
/// words of `set`.
pub fn average_similarity(
    table: &EmbeddingTable,
    word: &str,
    set: &WordSet,
) -> Result<AverageSimilarity, EmbeddingError> {
    table.lookup(word)?;
    let mut missing = Vec::new();
    let words = resolve(table, set, &mut missing);
    if words.is_empty() {
        return Err(EmbeddingError::NoResolvableWords(set.name().to_string()));
    }
    let sims = words
        .iter()
        .map(|w| word_cosine(table, word, w))
        .collect::<Result<Vec<_>, _>>()?;
    let n = sims.len() as f64;
    Ok(AverageSimilarity {
        word: word.to_string(),
        mean: sims.iter().sum::<f64>() / n,
        abs_mean: sims.iter().map(|s| s.abs()).sum::<f64>() / n,
        resolved: sims.len(),
        missing_words: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::WordSetRole;
    use proptest::prelude::*;

    fn set(words: &[&str]) -> WordSet {
        WordSet::new("s", WordSetRole::Target, words.iter().copied()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[3.0f64, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0f64, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine(&[0.0f64, 0.0], &[1.0, 0.0]), Err(EmbeddingError::ZeroVector(_))));
        assert!(matches!(cosine(&[1.0f64], &[1.0, 0.0]), Err(EmbeddingError::LengthMismatch { .. })));
    }

    #[test]
    fn matrix_matches_pointwise_cosines() {
        let t = EmbeddingTable::from_entries([
            ("man", [1.0f32, 0.2]),
            ("woman", [0.9, 0.5]),
            ("doctor", [0.3, 1.0]),
            ("nurse", [-0.4, 0.8]),
        ])
        .unwrap();
        let m = similarity_matrix(&t, &set(&["man", "woman", "xe"]), &set(&["doctor", "nurse"])).unwrap();
        assert_eq!(m.missing_words, ["xe"]);
        assert_eq!(m.row_words, ["man", "woman"]);
        // hand-computed: man·doctor = 0.5, |man| = sqrt(1.04), |doctor| = sqrt(1.09)
        let expect = 0.5 / (1.04f64.sqrt() * 1.09f64.sqrt());
        assert!((m.get("man", "doctor").unwrap() - expect).abs() < 1e-7);
        let expect = (-0.36 + 0.4) / (1.06f64.sqrt() * 0.8f64.sqrt());
        assert!((m.get("woman", "nurse").unwrap() - expect).abs() < 1e-7);
    }

    #[test]
    fn self_similarity_matrix() {
        let t = EmbeddingTable::from_entries([("w", [0.3f32, -2.0])]).unwrap();
        let m = similarity_matrix(&t, &set(&["w"]), &set(&["w"])).unwrap();
        assert_eq!(m.values, vec![vec![1.0]]);
    }

    #[test]
    fn matrix_errors_when_a_side_is_absent() {
        let t = EmbeddingTable::from_entries([("w", [1.0f32])]).unwrap();
        assert!(matches!(
            similarity_matrix(&t, &set(&["x"]), &set(&["w"])),
            Err(EmbeddingError::NoResolvableWords(_))
        ));
    }

    #[test]
    fn averages() {
        let t = EmbeddingTable::from_entries([
            ("w", [1.0f32, 0.0]),
            // cos 0.5 and -0.5 against w
            ("p", [0.5, 0.75f32.sqrt()]),
            ("n", [-0.5, 0.75f32.sqrt()]),
        ])
        .unwrap();
        let a = average_similarity(&t, "w", &set(&["w"])).unwrap();
        assert_eq!((a.mean, a.abs_mean), (1.0, 1.0));
        let a = average_similarity(&t, "w", &set(&["p", "n", "gone"])).unwrap();
        assert!(a.mean.abs() < 1e-7);
        assert!((a.abs_mean - 0.5).abs() < 1e-7);
        assert_eq!(a.missing_words, ["gone"]);
        assert!(average_similarity(&t, "gone", &set(&["p"])).is_err());
        assert!(average_similarity(&t, "w", &set(&["gone"])).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_bounded_scale_invariant(
            u in prop::collection::vec(-10.0f64..10.0, 4),
            v in prop::collection::vec(-10.0f64..10.0, 4),
            s in 0.01f64..100.0,
        ) {
            prop_assume!(l2_norm(&u) > 1e-6 && l2_norm(&v) > 1e-6);
            let c = cosine(&u, &v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert_eq!(c, cosine(&v, &u).unwrap());
            let us: Vec<f64> = u.iter().map(|x| x * s).collect();
            prop_assert!((cosine(&us, &v).unwrap() - c).abs() < 1e-12);
        }
    }
}
