use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::similarity::{cosine_from_parts, dot};
use super::{EmbeddingError, EmbeddingTable};
use crate::lexicon::WordSet;

/// Target sets `x`, `y` and attribute sets `a`, `b` of an association test.
#[derive(Debug, Clone, Copy)]
pub struct WeatSets<'a> {
    pub x: &'a WordSet,
    pub y: &'a WordSet,
    pub a: &'a WordSet,
    pub b: &'a WordSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeatOptions {
    /// Permutation count for the p-value; `None` skips the test. A count at
    /// or above the number of distinct repartitions enumerates them all.
    pub permutations: Option<usize>,
    pub seed: u64,
}

impl Default for WeatOptions {
    fn default() -> Self {
        WeatOptions {
            permutations: Some(10_000),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatResult {
    pub x: String,
    pub y: String,
    pub a: String,
    pub b: String,
    pub statistic: f64,
    pub effect_size: f64,
    pub p_value: Option<f64>,
    /// Repartitions evaluated for the p-value.
    pub permutations_run: Option<u64>,
    pub exhaustive: bool,
    pub x_used: Vec<String>,
    pub y_used: Vec<String>,
    pub missing_words: Vec<String>,
}

struct Resolved<'t> {
    words: Vec<String>,
    vecs: Vec<(&'t [f32], f64)>,
}

fn resolve<'t>(table: &'t EmbeddingTable, set: &WordSet, missing: &mut Vec<String>) -> Resolved<'t> {
    let mut words = Vec::new();
    let mut vecs = Vec::new();
    for w in set.words() {
        match table.lookup(w) {
            Ok(v) => {
                words.push(w.clone());
                vecs.push(v);
            }
            Err(_) => {
                if !missing.contains(w) {
                    missing.push(w.clone());
                }
            }
        }
    }
    Resolved { words, vecs }
}

fn mean_cos(w: (&[f32], f64), set: &[(&[f32], f64)]) -> f64 {
    set.iter()
        .map(|&(v, n)| cosine_from_parts(dot(w.0, v), w.1, n))
        .sum::<f64>()
        / set.len() as f64
}

/// `s(w, A, B)`: mean cosine of `w` with `a` minus mean cosine with `b`.
/// Attribute words missing from the table are skipped.
pub fn weat_association(
    table: &EmbeddingTable,
    word: &str,
    a: &WordSet,
    b: &WordSet,
) -> Result<f64, EmbeddingError> {
    let w = table.lookup(word)?;
    let mut missing = Vec::new();
    let ra = resolve(table, a, &mut missing);
    let rb = resolve(table, b, &mut missing);
    if ra.vecs.is_empty() {
        return Err(EmbeddingError::NoResolvableWords(a.name().to_string()));
    }
    if rb.vecs.is_empty() {
        return Err(EmbeddingError::NoResolvableWords(b.name().to_string()));
    }
    Ok(mean_cos(w, &ra.vecs) - mean_cos(w, &rb.vecs))
}

/// Test statistic of a partition given per-word associations and the
/// indices forming the first target set; the rest form the second.
fn partition_statistic(s: &[f64], in_x: &[bool]) -> f64 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (v, &x) in s.iter().zip(in_x) {
        if x {
            sx += v;
        } else {
            sy += v;
        }
    }
    sx - sy
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

// Rounding slack when comparing a repartition to the observed statistic.
fn tolerance(s: &[f64]) -> f64 {
    1e-12 * (1.0 + s.iter().map(|v| v.abs()).sum::<f64>())
}

/// Exact one-sided p-value over every split of `s` into `nx` and the rest.
fn exhaustive_p(s: &[f64], nx: usize, observed: f64) -> (f64, u64) {
    let n = s.len();
    let eps = tolerance(s);
    let mut idx: Vec<usize> = (0..nx).collect();
    let mut in_x = vec![false; n];
    let (mut hits, mut total) = (0u64, 0u64);
    loop {
        in_x.iter_mut().for_each(|b| *b = false);
        for &i in &idx {
            in_x[i] = true;
        }
        if partition_statistic(s, &in_x) >= observed - eps {
            hits += 1;
        }
        total += 1;
        // next k-combination in lexicographic order
        let mut i = nx;
        while i > 0 && idx[i - 1] == i - 1 + n - nx {
            i -= 1;
        }
        if i == 0 {
            return (hits as f64 / total as f64, total);
        }
        idx[i - 1] += 1;
        for j in i..nx {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

const PERM_BLOCK: usize = 1024;

/// Monte Carlo p-value from `count` random repartitions. Block `i` draws
/// from ChaCha stream `i` of `seed`, so results do not depend on threads.
fn sampled_p(s: &[f64], nx: usize, observed: f64, count: usize, seed: u64) -> f64 {
    let eps = tolerance(s);
    let blocks = count.div_ceil(PERM_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let n_here = PERM_BLOCK.min(count - block * PERM_BLOCK);
            let mut order: Vec<usize> = (0..s.len()).collect();
            let mut in_x = vec![false; s.len()];
            let mut hits = 0u64;
            for _ in 0..n_here {
                order.shuffle(&mut rng);
                in_x.iter_mut().for_each(|b| *b = false);
                for &i in &order[..nx] {
                    in_x[i] = true;
                }
                if partition_statistic(s, &in_x) >= observed - eps {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    hits as f64 / count as f64
}

/// Word-embedding association test between target sets `x`, `y` and
/// attribute sets `a`, `b`.
///
/// Returns the statistic `S = Σ_x s(x) − Σ_y s(y)`, the effect size
/// `(mean_x s − mean_y s) / std_{x∪y} s` (sample standard deviation; zero
/// when every association is equal), and optionally the one-sided
/// permutation p-value: the fraction of equal-size repartitions of `x ∪ y`
/// whose statistic is at least `S`.
pub fn weat_effect_size(table: &EmbeddingTable, sets: WeatSets, options: &WeatOptions) -> Result<WeatResult, EmbeddingError> {
    if let Some(w) = sets.x.words().iter().find(|w| sets.y.contains(w)) {
        return Err(EmbeddingError::InvalidArgument(format!(
            "target sets {:?} and {:?} share {w:?}",
            sets.x.name(),
            sets.y.name()
        )));
    }
    let mut missing = Vec::new();
    let rx = resolve(table, sets.x, &mut missing);
    let ry = resolve(table, sets.y, &mut missing);
    let ra = resolve(table, sets.a, &mut missing);
    let rb = resolve(table, sets.b, &mut missing);
    for (r, set) in [(&rx, sets.x), (&ry, sets.y), (&ra, sets.a), (&rb, sets.b)] {
        if r.vecs.is_empty() {
            return Err(EmbeddingError::NoResolvableWords(set.name().to_string()));
        }
    }

    let s: Vec<f64> = rx
        .vecs
        .iter()
        .chain(&ry.vecs)
        .map(|&w| mean_cos(w, &ra.vecs) - mean_cos(w, &rb.vecs))
        .collect();
    let nx = rx.vecs.len();
    let (sx, sy) = s.split_at(nx);
    let statistic = sx.iter().sum::<f64>() - sy.iter().sum::<f64>();

    let n = s.len() as f64;
    let mean_all = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean_all).powi(2)).sum::<f64>() / (n - 1.0);
    let diff = sx.iter().sum::<f64>() / sx.len() as f64 - sy.iter().sum::<f64>() / sy.len() as f64;
    let effect_size = if var > 0.0 { diff / var.sqrt() } else { 0.0 };

    let in_x: Vec<bool> = (0..s.len()).map(|i| i < nx).collect();
    let observed = partition_statistic(&s, &in_x);
    let (p_value, permutations_run, exhaustive) = match options.permutations {
        None => (None, None, false),
        Some(0) => {
            return Err(EmbeddingError::InvalidArgument("permutation count must be positive".into()));
        }
        Some(count) => {
            if count as u128 >= binomial(s.len(), nx) {
                let (p, total) = exhaustive_p(&s, nx, observed);
                (Some(p), Some(total), true)
            } else {
                (Some(sampled_p(&s, nx, observed, count, options.seed)), Some(count as u64), false)
            }
        }
    };

    Ok(WeatResult {
        x: sets.x.name().to_string(),
        y: sets.y.name().to_string(),
        a: sets.a.name().to_string(),
        b: sets.b.name().to_string(),
        statistic,
        effect_size,
        p_value,
        permutations_run,
        exhaustive,
        x_used: rx.words,
        y_used: ry.words,
        missing_words: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::WordSetRole;
    use proptest::prelude::*;

    fn set(name: &str, words: &[&str]) -> WordSet {
        WordSet::new(name, WordSetRole::Target, words.iter().copied()).unwrap()
    }

    fn toy() -> EmbeddingTable {
        EmbeddingTable::from_entries([
            ("x1", [1.0f32, 0.0]),
            ("x2", [0.8, 0.6]),
            ("y1", [0.0, 1.0]),
            ("y2", [0.6, 0.8]),
            ("a1", [1.0, 0.0]),
            ("b1", [0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn two_dimensional_toy() {
        // s(x1)=1, s(x2)=0.2, s(y1)=-1, s(y2)=-0.2 (unit vectors, a=e1, b=e2)
        let t = toy();
        let (x, y, a, b) = (set("x", &["x1", "x2"]), set("y", &["y1", "y2"]), set("a", &["a1"]), set("b", &["b1"]));
        let r = weat_effect_size(&t, WeatSets { x: &x, y: &y, a: &a, b: &b }, &WeatOptions { permutations: Some(100), seed: 1 })
            .unwrap();
        assert!((r.statistic - 2.4).abs() < 1e-7);
        // mean diff 1.2; sample std of {1, .2, -1, -.2} = sqrt(2.08/3)
        assert!((r.effect_size - 1.2 / (2.08f64 / 3.0).sqrt()).abs() < 1e-6);
        // 6 repartitions; only the observed one reaches 2.4
        assert!(r.exhaustive);
        assert_eq!(r.permutations_run, Some(6));
        assert!((r.p_value.unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((weat_association(&t, "x2", &a, &b).unwrap() - 0.2).abs() < 1e-7);
    }

    #[test]
    fn swapping_targets_negates() {
        let t = toy();
        let (x, y, a, b) = (set("x", &["x1", "x2"]), set("y", &["y1", "y2"]), set("a", &["a1"]), set("b", &["b1"]));
        let o = WeatOptions { permutations: None, seed: 0 };
        let r1 = weat_effect_size(&t, WeatSets { x: &x, y: &y, a: &a, b: &b }, &o).unwrap();
        let r2 = weat_effect_size(&t, WeatSets { x: &y, y: &x, a: &a, b: &b }, &o).unwrap();
        assert!((r1.statistic + r2.statistic).abs() < 1e-12);
        assert!((r1.effect_size + r2.effect_size).abs() < 1e-12);
    }

    #[test]
    fn identical_targets_have_zero_effect() {
        let t = EmbeddingTable::from_entries([
            ("p", [1.0f32, 2.0]),
            ("q", [-1.0, 0.5]),
            ("p2", [1.0, 2.0]),
            ("q2", [-1.0, 0.5]),
            ("a", [1.0, 0.0]),
            ("b", [0.3, 1.0]),
        ])
        .unwrap();
        let (x, y) = (set("x", &["p", "q"]), set("y", &["p2", "q2"]));
        let (a, b) = (set("a", &["a"]), set("b", &["b"]));
        let r = weat_effect_size(&t, WeatSets { x: &x, y: &y, a: &a, b: &b }, &WeatOptions::default()).unwrap();
        assert_eq!(r.effect_size, 0.0);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn missing_words_dropped_and_reported() {
        let t = toy();
        let (x, y) = (set("x", &["x1", "x2", "zz"]), set("y", &["y1", "y2"]));
        let (a, b) = (set("a", &["a1", "qq"]), set("b", &["b1"]));
        let r = weat_effect_size(&t, WeatSets { x: &x, y: &y, a: &a, b: &b }, &WeatOptions { permutations: None, seed: 0 })
            .unwrap();
        assert_eq!(r.missing_words, ["zz", "qq"]);
        assert_eq!(r.x_used, ["x1", "x2"]);
        let gone = set("g", &["nope"]);
        assert!(matches!(
            weat_effect_size(&t, WeatSets { x: &gone, y: &y, a: &a, b: &b }, &WeatOptions::default()),
            Err(EmbeddingError::NoResolvableWords(_))
        ));
    }

    #[test]
    fn overlapping_targets_rejected() {
        let t = toy();
        let (x, a, b) = (set("x", &["x1", "x2"]), set("a", &["a1"]), set("b", &["b1"]));
        assert!(matches!(
            weat_effect_size(&t, WeatSets { x: &x, y: &x, a: &a, b: &b }, &WeatOptions::default()),
            Err(EmbeddingError::InvalidArgument(_))
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 5), 1);
    }

    #[test]
    fn enumeration_visits_every_split_once() {
        let s = [5.0, 3.0, 1.0, 0.5, -2.0];
        // observed = first two vs rest is the unique maximum
        let (p, total) = exhaustive_p(&s, 2, 5.0 + 3.0 - (1.0 + 0.5 - 2.0));
        assert_eq!(total, 10);
        assert_eq!(p, 0.1);
    }

    #[test]
    fn sampling_is_seeded_and_close_to_exact() {
        let s: Vec<f64> = (0..14).map(|i| ((i * 37) % 11) as f64 * 0.1 - 0.4).collect();
        let in_x: Vec<bool> = (0..14).map(|i| i < 7).collect();
        let obs = partition_statistic(&s, &in_x);
        let (exact, _) = exhaustive_p(&s, 7, obs);
        let p1 = sampled_p(&s, 7, obs, 20_000, 9);
        assert_eq!(p1, sampled_p(&s, 7, obs, 20_000, 9));
        assert!((p1 - exact).abs() < 0.02, "{p1} vs {exact}");
    }

    proptest! {
        #[test]
        fn scaling_vectors_leaves_results_unchanged(scale in 0.05f32..20.0) {
            let base = [
                ("x1", [1.0f32, 0.3, -0.2]),
                ("x2", [0.4, 0.9, 0.1]),
                ("y1", [-0.3, 0.2, 1.0]),
                ("y2", [0.1, -0.7, 0.5]),
                ("a1", [1.0, 0.1, 0.0]),
                ("b1", [0.0, 0.2, 1.0]),
            ];
            let scaled = base.map(|(w, v)| (w, v.map(|c| c * scale)));
            let t1 = EmbeddingTable::from_entries(base).unwrap();
            let t2 = EmbeddingTable::from_entries(scaled).unwrap();
            let (x, y, a, b) = (set("x", &["x1", "x2"]), set("y", &["y1", "y2"]), set("a", &["a1"]), set("b", &["b1"]));
            let o = WeatOptions { permutations: Some(10), seed: 0 };
            let r1 = weat_effect_size(&t1, WeatSets { x: &x, y: &y, a: &a, b: &b }, &o).unwrap();
            let r2 = weat_effect_size(&t2, WeatSets { x: &x, y: &y, a: &a, b: &b }, &o).unwrap();
            prop_assert!((r1.statistic - r2.statistic).abs() < 1e-6);
            prop_assert!((r1.effect_size - r2.effect_size).abs() < 1e-6);
            prop_assert_eq!(r1.p_value, r2.p_value);
        }
    }
}
