//! Multi-distribution benchmark construction from entity-matching data.
//!
//! Every matched pair (a, b) becomes one query per side, using that side's
//! title as query text and requiring both descriptions. Matched pairs are
//! split 1:1 into validation and test; unmatched items of each source become
//! single-distribution training pairs (title as query, own description as
//! positive).

use std::collections::BTreeSet;

use crate::data::{Corpus, Gold, Query, QuerySet, TrainingPair};
use crate::error::{Error, Result};
use crate::rng::{shuffle, SplitMix64};

/// Which side's titles are turned into queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuerySide {
    #[default]
    Both,
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityBenchmark {
    pub val: QuerySet,
    pub test: QuerySet,
    pub train_a: Vec<TrainingPair>,
    pub train_b: Vec<TrainingPair>,
}

/// Seeded Fisher–Yates shuffle, first half (rounded up) to validation.
pub fn split_half<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut shuffled = items.to_vec();
    shuffle(&mut shuffled, &mut SplitMix64::new(seed));
    let cut = shuffled.len().div_ceil(2);
    let test = shuffled.split_off(cut);
    (shuffled, test)
}

pub fn build_entity_benchmark(
    corpus_a: &Corpus,
    corpus_b: &Corpus,
    matches: &[(String, String)],
    split_seed: u64,
    side: QuerySide,
) -> Result<EntityBenchmark> {
    let mut seen_a = BTreeSet::new();
    let mut seen_b = BTreeSet::new();
    for (a, b) in matches {
        if !corpus_a.contains(a) {
            return Err(Error::UnknownMatchedId {
                corpus: corpus_a.id().to_string(),
                id: a.clone(),
            });
        }
        if !corpus_b.contains(b) {
            return Err(Error::UnknownMatchedId {
                corpus: corpus_b.id().to_string(),
                id: b.clone(),
            });
        }
        if !seen_a.insert(a.as_str()) {
            return Err(Error::DuplicateMatch(a.clone()));
        }
        if !seen_b.insert(b.as_str()) {
            return Err(Error::DuplicateMatch(b.clone()));
        }
    }

    let (val_pairs, test_pairs) = split_half(matches, split_seed);
    let val = queries_for(corpus_a, corpus_b, &val_pairs, side)?;
    let test = queries_for(corpus_a, corpus_b, &test_pairs, side)?;

    Ok(EntityBenchmark {
        val,
        test,
        train_a: unmatched_pairs(corpus_a, &seen_a),
        train_b: unmatched_pairs(corpus_b, &seen_b),
    })
}

fn queries_for(
    corpus_a: &Corpus,
    corpus_b: &Corpus,
    pairs: &[(String, String)],
    side: QuerySide,
) -> Result<QuerySet> {
    let mut queries = Vec::new();
    for (a, b) in pairs {
        let mut relevant = Gold::new();
        relevant.insert(corpus_a.id().to_string(), BTreeSet::from([a.clone()]));
        relevant.insert(corpus_b.id().to_string(), BTreeSet::from([b.clone()]));
        let sides: &[(&Corpus, &str)] = match side {
            QuerySide::Both => &[(corpus_a, a), (corpus_b, b)],
            QuerySide::A => &[(corpus_a, a)],
            QuerySide::B => &[(corpus_b, b)],
        };
        for (corpus, id) in sides {
            let passage = corpus.get(id).expect("validated above");
            let title = passage
                .title
                .clone()
                .ok_or_else(|| Error::MissingTitle(format!("{}:{}", corpus.id(), id)))?;
            queries.push(Query {
                id: format!("{}:{}", corpus.id(), id),
                text: title,
                relevant: relevant.clone(),
            });
        }
    }
    Ok(QuerySet::new(queries))
}

fn unmatched_pairs(corpus: &Corpus, matched: &BTreeSet<&str>) -> Vec<TrainingPair> {
    corpus
        .passages()
        .iter()
        .filter(|p| !matched.contains(p.id.as_str()))
        .filter_map(|p| {
            p.title.as_ref().map(|t| TrainingPair {
                query_text: t.clone(),
                positive_passage_id: p.id.clone(),
                corpus_id: corpus.id().to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Passage;

    fn corpus(id: &str, n: usize) -> Corpus {
        let passages = (0..n)
            .map(|i| {
                Passage::new(format!("{id}{i}"), format!("description {id} {i}"))
                    .with_title(format!("title {id} {i}"))
            })
            .collect();
        Corpus::new(id, passages).unwrap()
    }

    fn matches(n: usize) -> Vec<(String, String)> {
        (0..n).map(|i| (format!("a{i}"), format!("b{i}"))).collect()
    }

    #[test]
    fn two_queries_per_match() {
        let a = corpus("a", 30);
        let b = corpus("b", 40);
        let bench = build_entity_benchmark(&a, &b, &matches(11), 5, QuerySide::Both).unwrap();
        assert_eq!(bench.val.len() + bench.test.len(), 22);
        assert_eq!(bench.val.len(), 12);
        assert_eq!(bench.test.len(), 10);
        assert_eq!(bench.train_a.len(), 19);
        assert_eq!(bench.train_b.len(), 29);
        for q in bench.val.iter().chain(bench.test.iter()) {
            assert_eq!(q.gold_count(), 2);
            assert!(!q.is_single_distribution());
        }
        bench.val.validate(&[&a, &b]).unwrap();
    }

    #[test]
    fn one_sided_queries() {
        let a = corpus("a", 5);
        let b = corpus("b", 5);
        let bench = build_entity_benchmark(&a, &b, &matches(4), 1, QuerySide::A).unwrap();
        assert_eq!(bench.val.len() + bench.test.len(), 4);
        assert!(bench.val.iter().all(|q| q.id.starts_with("a:")));
    }

    #[test]
    fn no_matches_means_all_training() {
        let a = corpus("a", 3);
        let b = corpus("b", 2);
        let bench = build_entity_benchmark(&a, &b, &[], 0, QuerySide::Both).unwrap();
        assert!(bench.val.is_empty() && bench.test.is_empty());
        assert_eq!(bench.train_a.len(), 3);
        assert_eq!(bench.train_b.len(), 2);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let a = corpus("a", 4);
        let b = corpus("b", 4);
        let m = matches(4);
        let x = build_entity_benchmark(&a, &b, &m, 42, QuerySide::A).unwrap();
        let y = build_entity_benchmark(&a, &b, &m, 42, QuerySide::A).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.val.len(), 2);
        assert_eq!(x.test.len(), 2);
        let val: BTreeSet<_> = x.val.iter().map(|q| q.id.clone()).collect();
        assert!(x.test.iter().all(|q| !val.contains(&q.id)));
    }

    #[test]
    fn rejects_unknown_and_duplicate_matches() {
        let a = corpus("a", 3);
        let b = corpus("b", 3);
        let unknown = vec![("a9".to_string(), "b0".to_string())];
        assert!(matches!(
            build_entity_benchmark(&a, &b, &unknown, 0, QuerySide::Both),
            Err(Error::UnknownMatchedId { .. })
        ));
        let dup = vec![
            ("a0".to_string(), "b0".to_string()),
            ("a0".to_string(), "b1".to_string()),
        ];
        assert!(matches!(
            build_entity_benchmark(&a, &b, &dup, 0, QuerySide::Both),
            Err(Error::DuplicateMatch(id)) if id == "a0"
        ));
    }
}
