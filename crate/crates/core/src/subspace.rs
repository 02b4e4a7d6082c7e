//! Principal-component gender subspaces of word sets and distances between
//! them.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, EmbeddingError, EmbeddingTable};
use crate::lexicon::WordSet;

#[derive(Debug, Error)]
pub enum SubspaceError {
    #[error("set {set:?} has {found} resolvable words; at least 2 are needed")]
    TooFewWords { set: String, found: usize },
    #[error("k = {k} is out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("set {0:?} has zero variance (all vectors identical)")]
    DegenerateVariance(String),
    #[error("component dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("report {0:?} has no components")]
    NoComponents(String),
    #[error("eigendecomposition did not converge")]
    NoConvergence,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub set_name: String,
    /// Unit vectors, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalue of each component.
    pub explained_variance: Vec<f64>,
    /// Share of the set's total variance carried by each component.
    pub explained_variance_ratio: Vec<f64>,
    pub words_used: Vec<String>,
    pub missing_words: Vec<String>,
}

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Top-`k` principal components of the set's vectors.
///
/// Vectors are mean-centred; components are eigenvectors of the sample
/// covariance (divisor `n − 1`). Each component is oriented so its dot
/// product with the uncentred set mean is non-negative; when that product
/// is zero, the first non-zero coordinate is made positive.
pub fn principal_components(table: &EmbeddingTable, set: &WordSet, k: usize) -> Result<SubspaceReport, SubspaceError> {
    let mut words_used = Vec::new();
    let mut missing_words = Vec::new();
    let mut rows: Vec<&[f32]> = Vec::new();
    for w in set.words() {
        match table.lookup(w) {
            Ok((v, _)) => {
                words_used.push(w.clone());
                rows.push(v);
            }
            Err(_) => missing_words.push(w.clone()),
        }
    }
    let n = rows.len();
    if n < 2 {
        return Err(SubspaceError::TooFewWords {
            set: set.name().to_string(),
            found: n,
        });
    }
    let d = table.dimension();
    let max_k = n.min(d);
    if k == 0 || k > max_k {
        return Err(SubspaceError::KOutOfRange { k, max: max_k });
    }

    let data = DMatrix::from_fn(n, d, |i, j| rows[i][j] as f64);
    let mean: Vec<f64> = (0..d).map(|j| data.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);

    let total_variance = centered.norm_squared() / (n - 1) as f64;
    let scale = data.norm_squared() / n as f64;
    if total_variance <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return Err(SubspaceError::DegenerateVariance(set.name().to_string()));
    }

    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = nalgebra::SymmetricEigen::try_new(cov, EIGEN_EPS, EIGEN_MAX_ITER).ok_or(SubspaceError::NoConvergence)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &i in &order[..k] {
        let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        orient(&mut c, &mean);
        components.push(c);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    let explained_variance_ratio = explained_variance.iter().map(|v| v / total_variance).collect();

    Ok(SubspaceReport {
        set_name: set.name().to_string(),
        components,
        explained_variance,
        explained_variance_ratio,
        words_used,
        missing_words,
    })
}

fn orient(c: &mut [f64], mean: &[f64]) {
    let dot: f64 = c.iter().zip(mean).map(|(a, b)| a * b).sum();
    let mean_norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let flip = if dot.abs() > 1e-12 * mean_norm {
        dot < 0.0
    } else {
        c.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0)
    };
    if flip {
        c.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `1 − cos` between the first components of two subspaces; in [0, 2].
pub fn subspace_distance(a: &SubspaceReport, b: &SubspaceReport) -> Result<f64, SubspaceError> {
    let ca = a.components.first().ok_or_else(|| SubspaceError::NoComponents(a.set_name.clone()))?;
    let cb = b.components.first().ok_or_else(|| SubspaceError::NoComponents(b.set_name.clone()))?;
    if ca.len() != cb.len() {
        return Err(SubspaceError::DimensionMismatch(ca.len(), cb.len()));
    }
    Ok((1.0 - cosine(ca, cb)?).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceComparison {
    pub subspaces: Vec<SubspaceReport>,
    /// `distances[a][b]`, symmetric with a zero diagonal.
    pub distances: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Pairwise first-component distances between several subspaces.
pub fn compare_subspaces(subspaces: Vec<SubspaceReport>) -> Result<SubspaceComparison, SubspaceError> {
    let mut distances: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (i, a) in subspaces.iter().enumerate() {
        for b in &subspaces[i..] {
            let d = if std::ptr::eq(a, b) { 0.0 } else { subspace_distance(a, b)? };
            distances.entry(a.set_name.clone()).or_default().insert(b.set_name.clone(), d);
            distances.entry(b.set_name.clone()).or_default().insert(a.set_name.clone(), d);
        }
    }
    Ok(SubspaceComparison { subspaces, distances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::WordSetRole;
    use proptest::prelude::*;

    fn set(words: &[&str]) -> WordSet {
        WordSet::new("s", WordSetRole::Target, words.iter().copied()).unwrap()
    }

    fn dotp(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn antipodal_points() {
        let t = EmbeddingTable::from_entries([("a", [1.0f32, 0.0]), ("b", [-1.0, 0.0])]).unwrap();
        let r = principal_components(&t, &set(&["a", "b"]), 1).unwrap();
        // mean is zero, so the tie rule fixes the sign
        assert!((r.components[0][0] - 1.0).abs() < 1e-12);
        assert!(r.components[0][1].abs() < 1e-12);
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!((r.explained_variance[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let t = EmbeddingTable::from_entries([("a", [1.0f32, 2.0]), ("b", [1.0, 2.0]), ("c", [1.0, 2.0])]).unwrap();
        assert!(matches!(
            principal_components(&t, &set(&["a", "b", "c"]), 1),
            Err(SubspaceError::DegenerateVariance(_))
        ));
    }

    #[test]
    fn argument_checks() {
        let t = EmbeddingTable::from_entries([("a", [1.0f32, 2.0]), ("b", [3.0, 1.0])]).unwrap();
        assert!(matches!(principal_components(&t, &set(&["a", "zz"]), 1), Err(SubspaceError::TooFewWords { .. })));
        assert!(matches!(principal_components(&t, &set(&["a", "b"]), 0), Err(SubspaceError::KOutOfRange { .. })));
        assert!(matches!(principal_components(&t, &set(&["a", "b"]), 3), Err(SubspaceError::KOutOfRange { .. })));
        assert!(principal_components(&t, &set(&["a", "b"]), 2).is_ok());
    }

    #[test]
    fn orientation_follows_the_mean() {
        // points spread along (1,1), mean in the positive quadrant
        let t = EmbeddingTable::from_entries([("a", [1.0f32, 1.0]), ("b", [3.0, 3.0]), ("c", [2.0, 2.2])]).unwrap();
        let r = principal_components(&t, &set(&["a", "b", "c"]), 1).unwrap();
        assert!(r.components[0].iter().all(|x| *x > 0.0));
    }

    #[test]
    fn distances() {
        let mk = |name: &str, c: Vec<f64>| SubspaceReport {
            set_name: name.into(),
            components: vec![c],
            explained_variance: vec![1.0],
            explained_variance_ratio: vec![1.0],
            words_used: vec![],
            missing_words: vec![],
        };
        let a = mk("a", vec![1.0, 0.0]);
        let b = mk("b", vec![0.0, 1.0]);
        assert_eq!(subspace_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(subspace_distance(&a, &b).unwrap(), 1.0);
        assert!(matches!(
            subspace_distance(&a, &mk("c", vec![1.0, 0.0, 0.0])),
            Err(SubspaceError::DimensionMismatch(2, 3))
        ));
        let cmp = compare_subspaces(vec![a, b]).unwrap();
        assert_eq!(cmp.distances["a"]["b"], cmp.distances["b"]["a"]);
        assert_eq!(cmp.distances["a"]["a"], 0.0);
    }

    fn random_table(vals: &[Vec<f32>]) -> (EmbeddingTable, Vec<String>) {
        let names: Vec<String> = (0..vals.len()).map(|i| format!("w{i}")).collect();
        let t = EmbeddingTable::from_entries(names.iter().cloned().zip(vals.iter().cloned())).unwrap();
        (t, names)
    }

    proptest! {
        #[test]
        fn components_are_orthonormal_eigenvectors(
            vals in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 4), 3..9),
        ) {
            let (t, names) = random_table(&vals);
            let s = WordSet::new("s", WordSetRole::Target, &names).unwrap();
            let k = names.len().min(4);
            let r = match principal_components(&t, &s, k) {
                Ok(r) => r,
                Err(SubspaceError::DegenerateVariance(_)) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            for i in 0..k {
                prop_assert!((dotp(&r.components[i], &r.components[i]) - 1.0).abs() < 1e-9);
                for j in 0..i {
                    prop_assert!(dotp(&r.components[i], &r.components[j]).abs() < 1e-9);
                }
            }
            let ratios = &r.explained_variance_ratio;
            prop_assert!(ratios.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            prop_assert!(ratios.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
            prop_assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-9);

            // Cov·c = λ·c
            let n = vals.len();
            let mean: Vec<f64> = (0..4).map(|j| vals.iter().map(|v| v[j] as f64).sum::<f64>() / n as f64).collect();
            let cov = |a: usize, b: usize| {
                vals.iter().map(|v| (v[a] as f64 - mean[a]) * (v[b] as f64 - mean[b])).sum::<f64>() / (n - 1) as f64
            };
            let scale = r.explained_variance[0];
            for (c, lambda) in r.components.iter().zip(&r.explained_variance) {
                for a in 0..4 {
                    let lhs: f64 = (0..4).map(|b| cov(a, b) * c[b]).sum();
                    prop_assert!((lhs - lambda * c[a]).abs() <= 1e-6 * scale.max(1.0));
                }
            }
        }

        #[test]
        fn word_order_does_not_matter(
            vals in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 3), 3..8),
        ) {
            let (t, names) = random_table(&vals);
            let s1 = WordSet::new("s", WordSetRole::Target, &names).unwrap();
            let s2 = WordSet::new("s", WordSetRole::Target, names.iter().rev()).unwrap();
            let (Ok(r1), Ok(r2)) = (principal_components(&t, &s1, 1), principal_components(&t, &s2, 1)) else {
                return Ok(());
            };
            // a near-tie between the top two eigenvalues leaves the direction unstable
            prop_assume!(principal_components(&t, &s1, 2).map(|r| r.explained_variance[0] - r.explained_variance[1] > 1e-3 * r.explained_variance[0]).unwrap_or(false));
            // a mean nearly orthogonal to the component leaves the sign unstable
            let m: Vec<f64> = (0..3).map(|j| vals.iter().map(|v| v[j] as f64).sum::<f64>()).collect();
            prop_assume!(dotp(&r1.components[0], &m).abs() > 1e-6);
            prop_assert!((r1.explained_variance_ratio[0] - r2.explained_variance_ratio[0]).abs() < 1e-9);
            for (a, b) in r1.components[0].iter().zip(&r2.components[0]) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
