//! Recall@k and average precision over a ranked list of hits.

use crate::data::Gold;
use crate::error::{Error, Result};
use crate::search::ScoredHit;

fn is_gold(hit: &ScoredHit, gold: &Gold) -> bool {
    gold.get(&hit.corpus_id)
        .is_some_and(|ids| ids.contains(&hit.passage_id))
}

fn gold_size(gold: &Gold) -> Result<usize> {
    match gold.values().map(|s| s.len()).sum() {
        0 => Err(Error::EmptyGold),
        n => Ok(n),
    }
}

/// Fraction of gold passages present anywhere in `hits`.
pub fn recall(hits: &[ScoredHit], gold: &Gold) -> Result<f64> {
    let n = gold_size(gold)?;
    let found = hits.iter().filter(|h| is_gold(h, gold)).count();
    Ok(found as f64 / n as f64)
}

/// `(1/N) * sum_i P(i) * rel(i)` over the list as given; gold passages
/// missing from the list contribute nothing.
pub fn average_precision(hits: &[ScoredHit], gold: &Gold) -> Result<f64> {
    let n = gold_size(gold)?;
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, h) in hits.iter().enumerate() {
        if is_gold(h, gold) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / n as f64)
}
