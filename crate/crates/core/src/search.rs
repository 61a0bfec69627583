//! Exact dot-product scoring and deterministic top-k selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub corpus_id: String,
    pub passage_id: String,
    pub score: f64,
}

/// Descending score order in which `-0.0` and `0.0` tie.
fn score_desc(a: f64, b: f64) -> Ordering {
    (b + 0.0).total_cmp(&(a + 0.0))
}

/// Total retrieval order: score descending, then corpus id, then passage id.
pub fn hit_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    score_desc(a.score, b.score)
        .then_with(|| a.corpus_id.cmp(&b.corpus_id))
        .then_with(|| a.passage_id.cmp(&b.passage_id))
}

/// Hits in retrieval order with no repeated (corpus, passage).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    hits: Vec<ScoredHit>,
}

impl RankedList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts arbitrary hits into retrieval order.
    pub fn from_unsorted(mut hits: Vec<ScoredHit>) -> Self {
        hits.sort_by(hit_order);
        Self { hits }
    }

    pub fn hits(&self) -> &[ScoredHit] {
        &self.hits
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn prefix(&self, n: usize) -> &[ScoredHit] {
        &self.hits[..n.min(self.hits.len())]
    }

    pub fn into_hits(self) -> Vec<ScoredHit> {
        self.hits
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredHit> {
        self.hits.iter()
    }

    /// Checks the ordering and uniqueness invariants.
    pub fn is_well_formed(&self) -> bool {
        let sorted = self
            .hits
            .windows(2)
            .all(|w| hit_order(&w[0], &w[1]) == Ordering::Less);
        sorted && self.hits.iter().all(|h| h.score.is_finite())
    }
}

/// Exact dot product of `query` with every row, in row order.
pub fn score_all(query: &[f32], m: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if query.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            query: query.len(),
            matrix: m.dim(),
        });
    }
    Ok((0..m.len())
        .map(|i| {
            m.row(i)
                .iter()
                .zip(query)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum()
        })
        .collect())
}

/// First `min(k, n)` rows under the retrieval order.
///
/// Uses partial selection then sorts the selected prefix; ties on score fall
/// back to passage id (all rows share `corpus_id`).
pub fn top_k(scores: &[f64], ids: &[String], k: usize, corpus_id: &str) -> RankedList {
    debug_assert_eq!(scores.len(), ids.len());
    let k = k.min(scores.len());
    if k == 0 {
        return RankedList::empty();
    }
    let cmp = |&a: &usize, &b: &usize| {
        score_desc(scores[a], scores[b])
            .then_with(|| ids[a].cmp(&ids[b]))
    };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    RankedList {
        hits: idx
            .into_iter()
            .map(|i| ScoredHit {
                corpus_id: corpus_id.to_string(),
                passage_id: ids[i].clone(),
                score: scores[i],
            })
            .collect(),
    }
}

/// Scores `query` against `m` and keeps the top `k`.
pub fn search(query: &[f32], m: &EmbeddingMatrix, k: usize) -> Result<RankedList> {
    let scores = score_all(query, m)?;
    Ok(top_k(&scores, m.ids(), k, m.corpus_id()))
}

/// 1-based position `passage` would take in the full ranking of `m`.
pub fn rank_of(scores: &[f64], ids: &[String], target: usize) -> usize {
    let s = scores[target];
    let ahead = scores
        .iter()
        .zip(ids)
        .enumerate()
        .filter(|&(i, (&x, id))| {
            i != target && score_desc(x, s).then_with(|| id.cmp(&ids[target])) == Ordering::Less
        })
        .count();
    ahead + 1
}
