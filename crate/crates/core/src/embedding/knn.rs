use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::similarity::{cosine_from_parts, dot};
use super::{EmbeddingError, EmbeddingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborResult {
    pub query: String,
    /// Best first: cosine descending, ties by token ascending.
    pub neighbors: Vec<(String, f64)>,
}

impl NeighborResult {
    pub fn tokens(&self) -> Vec<&str> {
        self.neighbors.iter().map(|(t, _)| t.as_str()).collect()
    }
}

#[derive(Clone, Copy)]
struct Ranked<'a> {
    sim: f64,
    token: &'a str,
    idx: usize,
}

impl Ranked<'_> {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then_with(|| self.token.cmp(other.token))
    }
}

// Heap order: the worst-ranked candidate is the maximum.
impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked<'_> {}
impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

fn push_bounded<'a>(heap: &mut BinaryHeap<Ranked<'a>>, k: usize, cand: Ranked<'a>) {
    if heap.len() < k {
        heap.push(cand);
    } else if let Some(worst) = heap.peek() {
        if cand.rank_cmp(worst) == Ordering::Less {
            heap.pop();
            heap.push(cand);
        }
    }
}

const CHUNK: usize = 4096;

/// The `k` tokens most cosine-similar to `query`, by exact parallel scan.
///
/// Zero vectors in the table have no defined cosine and are never
/// returned. With `exclude_self`, the query token itself is skipped.
pub fn nearest_neighbors(
    table: &EmbeddingTable,
    query: &str,
    k: usize,
    exclude_self: bool,
) -> Result<NeighborResult, EmbeddingError> {
    let (qv, qn) = table.lookup(query)?;
    let qi = table.index_of(query).expect("looked up");
    if k == 0 {
        return Ok(NeighborResult {
            query: query.to_string(),
            neighbors: Vec::new(),
        });
    }
    let norms = table.norms();
    let tokens = table.tokens();

    let heaps: Vec<BinaryHeap<Ranked>> = (0..tokens.len())
        .into_par_iter()
        .chunks(CHUNK)
        .map(|idxs| {
            let mut heap = BinaryHeap::with_capacity(k + 1);
            for i in idxs {
                if (exclude_self && i == qi) || norms[i] == 0.0 {
                    continue;
                }
                let sim = cosine_from_parts(dot(qv, table.row(i)), qn, norms[i]);
                push_bounded(&mut heap, k, Ranked { sim, token: &tokens[i], idx: i });
            }
            heap
        })
        .collect();

    let mut merged = BinaryHeap::with_capacity(k + 1);
    for h in heaps {
        for cand in h {
            push_bounded(&mut merged, k, cand);
        }
    }
    let neighbors = merged
        .into_sorted_vec()
        .into_iter()
        .map(|r| (tokens[r.idx].clone(), r.sim))
        .collect();
    Ok(NeighborResult {
        query: query.to_string(),
        neighbors,
    })
}
