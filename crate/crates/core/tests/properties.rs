use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use mdr_core::allocation::{
    apportion_budget, retrieve_naive, retrieve_per_query_oracle, retrieve_per_task, CorpusCandidates,
    Fractions,
};
use mdr_core::data::Gold;
use mdr_core::embedding::{decode_embeddings, encode_embeddings, EmbeddingMatrix};
use mdr_core::metrics::{average_precision, recall};
use mdr_core::search::{top_k, RankedList, ScoredHit};
use mdr_core::training::contrastive_loss;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i:03}")).collect()
}

/// Full sort under the retrieval order, then the first `k`.
fn sorted_prefix(scores: &[f64], ids: &[String], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = ids.iter().cloned().zip(scores.iter().copied()).collect();
    all.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    all.truncate(k);
    all
}

fn candidates(corpus: &str, scores: &[f64], k: usize) -> CorpusCandidates {
    CorpusCandidates {
        corpus_id: corpus.into(),
        hits: top_k(scores, &ids(scores.len()), k, corpus),
        corpus_size: scores.len(),
    }
}

fn gold_of(a: usize, b: usize) -> Gold {
    Gold::from([
        ("A".to_string(), BTreeSet::from([format!("p{a:03}")])),
        ("B".to_string(), BTreeSet::from([format!("p{b:03}")])),
    ])
}

fn brute_recall(hits: &[ScoredHit], gold: &Gold) -> f64 {
    let n: usize = gold.values().map(BTreeSet::len).sum();
    let mut found = 0;
    for (c, set) in gold {
        for id in set {
            if hits.iter().any(|h| &h.corpus_id == c && &h.passage_id == id) {
                found += 1;
            }
        }
    }
    found as f64 / n as f64
}

fn brute_ap(hits: &[ScoredHit], gold: &Gold) -> f64 {
    let n: usize = gold.values().map(BTreeSet::len).sum();
    let rel = |h: &ScoredHit| gold.get(&h.corpus_id).is_some_and(|s| s.contains(&h.passage_id));
    let mut total = 0.0;
    for i in 0..hits.len() {
        if rel(&hits[i]) {
            let hits_so_far = hits[..=i].iter().filter(|h| rel(h)).count();
            total += hits_so_far as f64 / (i + 1) as f64;
        }
    }
    total / n as f64
}

/// Scores drawn from a small integer range so ties are common.
fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-4i32..=4).prop_map(f64::from), 1..=max_len)
}

proptest! {
    #[test]
    fn top_k_equals_sorted_prefix(s in scores(60), k in 0usize..70) {
        let ids = ids(s.len());
        let got: Vec<(String, f64)> = top_k(&s, &ids, k, "A")
            .iter()
            .map(|h| (h.passage_id.clone(), h.score))
            .collect();
        prop_assert_eq!(got, sorted_prefix(&s, &ids, k));
    }

    #[test]
    fn oracle_dominates(
        a in scores(50),
        b in scores(50),
        k in 1usize..=10,
        ga in 0usize..50,
        gb in 0usize..50,
    ) {
        let g = gold_of(ga % a.len(), gb % b.len());
        let lists = [candidates("A", &a, k), candidates("B", &b, k)];
        let (oracle, _) = retrieve_per_query_oracle(&lists, k, &g, "q").unwrap();
        let best = recall(oracle.hits(), &g).unwrap();
        let (naive, _) = retrieve_naive(&lists, k).unwrap();
        prop_assert!(best >= recall(naive.hits(), &g).unwrap());
        let sizes = BTreeMap::from([("A".to_string(), a.len()), ("B".to_string(), b.len())]);
        for i in 0..=10 {
            let f = Fractions::for_known("A", f64::from(i) / 10.0, &["A", "B"]).unwrap();
            let split = apportion_budget(k, &f, &sizes);
            let per_task = retrieve_per_task(&lists, &split).unwrap();
            prop_assert!(best >= recall(per_task.hits(), &g).unwrap());
        }
    }

    #[test]
    fn metrics_match_brute_force(
        corpus_flags in prop::collection::vec((any::<bool>(), 0usize..8), 0..15),
        ga in 0usize..8,
        gb in 0usize..8,
    ) {
        let mut seen = BTreeSet::new();
        let hits: Vec<ScoredHit> = corpus_flags
            .iter()
            .map(|&(is_a, i)| ScoredHit {
                corpus_id: if is_a { "A" } else { "B" }.into(),
                passage_id: format!("p{i:03}"),
                score: 0.0,
            })
            .filter(|h| seen.insert((h.corpus_id.clone(), h.passage_id.clone())))
            .collect();
        let g = gold_of(ga, gb);
        prop_assert_eq!(recall(&hits, &g).unwrap(), brute_recall(&hits, &g));
        prop_assert_eq!(average_precision(&hits, &g).unwrap(), brute_ap(&hits, &g));
        let ap = average_precision(&hits, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn recall_is_permutation_invariant(s in scores(20), k in 1usize..20, g in 0usize..20, rot in 0usize..20) {
        let gold = Gold::from([("A".to_string(), BTreeSet::from([format!("p{:03}", g % s.len())]))]);
        let mut hits = top_k(&s, &ids(s.len()), k, "A").into_hits();
        let r = recall(&hits, &gold).unwrap();
        let len = hits.len();
        hits.rotate_left(rot % len.max(1));
        prop_assert_eq!(recall(&hits, &gold).unwrap(), r);
    }

    #[test]
    fn mdre_roundtrip_is_bitwise(
        dim in 1usize..6,
        rows in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 6), 0..12),
    ) {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("id-{i}")).collect();
        let values: Vec<f32> = rows.iter().flat_map(|r| r[..dim].to_vec()).collect();
        let m = EmbeddingMatrix::new("A", dim, ids, values).unwrap();
        let bytes = encode_embeddings(&m);
        let back = decode_embeddings(&bytes, "A").unwrap();
        prop_assert_eq!(back.ids(), m.ids());
        prop_assert!(back.values().iter().zip(m.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(encode_embeddings(&back), bytes);
    }

    #[test]
    fn apportionment_is_conserving_and_monotone(
        f in 0u32..=100,
        size_a in 0usize..12,
        size_b in 0usize..12,
        k in 0usize..30,
    ) {
        let fr = Fractions::for_known("A", f64::from(f) / 100.0, &["A", "B"]).unwrap();
        let sizes = BTreeMap::from([("A".to_string(), size_a), ("B".to_string(), size_b)]);
        let now = apportion_budget(k, &fr, &sizes);
        let next = apportion_budget(k + 1, &fr, &sizes);
        prop_assert_eq!(now.values().sum::<usize>(), k.min(size_a + size_b));
        prop_assert!(now["A"] <= size_a && now["B"] <= size_b);
        prop_assert!(next["A"] >= now["A"] && next["B"] >= now["B"]);
    }

    #[test]
    fn per_task_recall_is_monotone_in_k(a in scores(30), b in scores(30), f in 0u32..=10, ga in 0usize..30, gb in 0usize..30) {
        let g = gold_of(ga % a.len(), gb % b.len());
        let fr = Fractions::for_known("A", f64::from(f) / 10.0, &["A", "B"]).unwrap();
        let sizes = BTreeMap::from([("A".to_string(), a.len()), ("B".to_string(), b.len())]);
        let lists = [candidates("A", &a, 20), candidates("B", &b, 20)];
        let mut last = 0.0;
        for k in 0..=20 {
            let r = recall(retrieve_per_task(&lists, &apportion_budget(k, &fr, &sizes)).unwrap().hits(), &g).unwrap();
            prop_assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn loss_invariants(s_pos in -20.0f64..20.0, s_neg in -20.0f64..20.0, c in -20.0f64..20.0) {
        let l = contrastive_loss(s_pos, s_neg);
        prop_assert!(l >= 0.0);
        prop_assert!((contrastive_loss(s_pos + c, s_neg + c) - l).abs() < 1e-12);
        prop_assert!(contrastive_loss(s_pos + 0.5, s_neg) < l);
        prop_assert!(contrastive_loss(s_pos, s_neg + 0.5) > l);
    }
}

#[test]
fn ranked_list_order_is_total() {
    let list = RankedList::from_unsorted(vec![
        ScoredHit { corpus_id: "B".into(), passage_id: "x".into(), score: 1.0 },
        ScoredHit { corpus_id: "A".into(), passage_id: "y".into(), score: 1.0 },
        ScoredHit { corpus_id: "A".into(), passage_id: "b".into(), score: 2.0 },
        ScoredHit { corpus_id: "A".into(), passage_id: "a".into(), score: 1.0 },
    ]);
    let got: Vec<_> = list.iter().map(|h| format!("{}:{}", h.corpus_id, h.passage_id)).collect();
    assert_eq!(got, ["A:b", "A:a", "A:y", "B:x"]);
    assert!(list.is_well_formed());
}

#[test]
fn ap_hand_case() {
    let g = Gold::from([
        ("A".to_string(), BTreeSet::from(["g1".to_string()])),
        ("B".to_string(), BTreeSet::from(["g2".to_string()])),
    ]);
    let hit = |c: &str, p: &str| ScoredHit { corpus_id: c.into(), passage_id: p.into(), score: 0.0 };
    let hits = [hit("A", "g1"), hit("A", "x"), hit("B", "g2")];
    assert!((average_precision(&hits, &g).unwrap() - 0.833_333_333_3).abs() < 1e-9);
}
