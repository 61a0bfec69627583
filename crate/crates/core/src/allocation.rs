//! Splitting a retrieval budget of `k` passages across corpora.
//!
//! Three strategies:
//!
//! * naive merging: global top-k over the union of all corpora;
//! * per-task allocation: a fixed split `k_c` per corpus, shared by all
//!   queries and parameterized by fractions;
//! * per-query oracle: for each query, the split that retrieves the most gold
//!   passages. Needs gold labels, so it is an upper bound rather than a
//!   deployable method.
//!
//! Strategies operate on per-corpus candidate lists that are exact top-k
//! prefixes of each corpus' ranking, so every strategy's output is the union
//! of per-corpus prefixes for some split.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Gold;
use crate::error::{Error, Result};
use crate::metrics::{average_precision, recall};
use crate::search::{hit_order, RankedList, ScoredHit};

/// Number of passages taken from each corpus.
pub type BudgetSplit = BTreeMap<String, usize>;

pub fn format_split(split: &BudgetSplit) -> String {
    split
        .iter()
        .map(|(c, n)| format!("{c}={n}"))
        .collect::<Vec<_>>()
        .join(";")
}

const FRACTION_TOLERANCE: f64 = 1e-9;

/// Non-negative per-corpus fractions summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fractions(BTreeMap<String, f64>);

impl Fractions {
    pub fn new(map: BTreeMap<String, f64>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::InvalidFractions("no corpora".into()));
        }
        if let Some((c, f)) = map.iter().find(|(_, f)| !(f.is_finite() && **f >= 0.0)) {
            return Err(Error::InvalidFractions(format!("{c}: {f}")));
        }
        let sum: f64 = map.values().sum();
        if (sum - 1.0).abs() > FRACTION_TOLERANCE {
            return Err(Error::InvalidFractions(format!("sum is {sum}, expected 1")));
        }
        Ok(Self(map))
    }

    /// `known` gets `f`; the remainder is shared equally by the other corpora.
    pub fn for_known(known: &str, f: f64, corpora: &[&str]) -> Result<Self> {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidFractions(format!("fraction {f} outside [0, 1]")));
        }
        let others: Vec<&str> = corpora.iter().copied().filter(|c| *c != known).collect();
        if others.len() + 1 != corpora.len() {
            return Err(Error::InvalidFractions(format!(
                "known corpus `{known}` must appear exactly once"
            )));
        }
        let mut map = BTreeMap::new();
        if others.is_empty() {
            map.insert(known.to_string(), 1.0);
        } else {
            map.insert(known.to_string(), f);
            let rest = (1.0 - f) / others.len() as f64;
            for c in others {
                map.insert(c.to_string(), rest);
            }
        }
        Self::new(map)
    }

    pub fn get(&self, corpus: &str) -> f64 {
        self.0.get(corpus).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(c, f)| (c.as_str(), *f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationStrategy {
    NaiveMerge,
    PerTask(Fractions),
    PerQueryOracle,
}

/// Command-line spelling of a strategy: `naive`, `per-task:<f>` or `oracle`,
/// where `f` is the fraction of the budget given to the known corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrategySelector {
    Naive,
    PerTask(f64),
    Oracle,
}

impl StrategySelector {
    pub fn resolve(&self, known: &str, corpora: &[&str]) -> Result<AllocationStrategy> {
        Ok(match *self {
            Self::Naive => AllocationStrategy::NaiveMerge,
            Self::PerTask(f) => AllocationStrategy::PerTask(Fractions::for_known(known, f, corpora)?),
            Self::Oracle => AllocationStrategy::PerQueryOracle,
        })
    }
}

impl FromStr for StrategySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidStrategy(s.to_string());
        match s {
            "naive" => Ok(Self::Naive),
            "oracle" => Ok(Self::Oracle),
            _ => {
                let f: f64 = s
                    .strip_prefix("per-task:")
                    .ok_or_else(bad)?
                    .parse()
                    .map_err(|_| bad())?;
                if (0.0..=1.0).contains(&f) {
                    Ok(Self::PerTask(f))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl fmt::Display for StrategySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Naive => f.write_str("naive"),
            Self::PerTask(x) => write!(f, "per-task:{x}"),
            Self::Oracle => f.write_str("oracle"),
        }
    }
}

/// Largest-remainder apportionment of `k` by `weights` (need not sum to one;
/// all-zero weights are treated as equal). Remainder ties go to the smaller
/// corpus id.
fn largest_remainder(k: usize, weights: &[(&str, f64)]) -> Vec<usize> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let equal = total <= 0.0;
    // Snap quotas to a 1e-9 grid so that e.g. 10 * 0.7 does not land a hair
    // above or below an integer.
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&(_, w)| {
            let share = if equal { 1.0 / weights.len() as f64 } else { w / total };
            (k as f64 * share * 1e9).round() / 1e9
        })
        .collect();
    let mut seats: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = seats.iter().sum();
    let leftover = k.saturating_sub(assigned);

    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then_with(|| weights[a].0.cmp(weights[b].0))
    });
    for &i in order.iter().cycle().take(leftover) {
        seats[i] += 1;
    }
    seats
}

/// Largest-remainder split of `k` by `fractions`, with any quota above its
/// corpus size clamped and the excess re-apportioned among the corpora that
/// still have room.
pub fn apportion_budget(
    k: usize,
    fractions: &Fractions,
    corpus_sizes: &BTreeMap<String, usize>,
) -> BudgetSplit {
    let ids: Vec<&str> = fractions.iter().map(|(c, _)| c).collect();
    let cap = |c: &str| corpus_sizes.get(c).copied().unwrap_or(usize::MAX);
    let weights: Vec<(&str, f64)> = fractions.iter().collect();
    let mut seats = largest_remainder(k, &weights);

    loop {
        let mut excess = 0;
        for (i, c) in ids.iter().enumerate() {
            let room = cap(c);
            if seats[i] > room {
                excess += seats[i] - room;
                seats[i] = room;
            }
        }
        if excess == 0 {
            break;
        }
        let open: Vec<usize> = (0..ids.len()).filter(|&i| seats[i] < cap(ids[i])).collect();
        if open.is_empty() {
            break;
        }
        let open_weights: Vec<(&str, f64)> = open.iter().map(|&i| weights[i]).collect();
        for (slot, extra) in open.iter().zip(largest_remainder(excess, &open_weights)) {
            seats[*slot] += extra;
        }
    }

    ids.iter().map(|c| c.to_string()).zip(seats).collect()
}

/// Exact top hits of one corpus for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusCandidates {
    pub corpus_id: String,
    pub hits: RankedList,
    pub corpus_size: usize,
}

impl CorpusCandidates {
    fn require(&self, n: usize) -> Result<&[ScoredHit]> {
        let need = n.min(self.corpus_size);
        if self.hits.len() < need {
            return Err(Error::InsufficientCandidates {
                corpus: self.corpus_id.clone(),
                have: self.hits.len(),
                need,
            });
        }
        Ok(self.hits.prefix(need))
    }
}

fn split_of(hits: &[ScoredHit], candidates: &[CorpusCandidates]) -> BudgetSplit {
    let mut split: BudgetSplit = candidates.iter().map(|c| (c.corpus_id.clone(), 0)).collect();
    for h in hits {
        *split.entry(h.corpus_id.clone()).or_default() += 1;
    }
    split
}

/// Global top-k over the union of corpora.
pub fn retrieve_naive(candidates: &[CorpusCandidates], k: usize) -> Result<(RankedList, BudgetSplit)> {
    let mut pool = Vec::new();
    for c in candidates {
        pool.extend_from_slice(c.require(k)?);
    }
    pool.sort_by(hit_order);
    pool.truncate(k);
    let split = split_of(&pool, candidates);
    Ok((RankedList::from_unsorted(pool), split))
}

/// Takes `split[c]` top hits from each corpus and orders the union by score.
pub fn retrieve_per_task(candidates: &[CorpusCandidates], split: &BudgetSplit) -> Result<RankedList> {
    let mut pool = Vec::new();
    for (corpus, &n) in split {
        if n == 0 {
            continue;
        }
        let c = candidates
            .iter()
            .find(|c| &c.corpus_id == corpus)
            .ok_or_else(|| Error::InsufficientCandidates {
                corpus: corpus.clone(),
                have: 0,
                need: n,
            })?;
        pool.extend_from_slice(c.require(n)?);
    }
    Ok(RankedList::from_unsorted(pool))
}

/// Every way to write `budget` as a sum of per-corpus counts within capacity.
fn compositions(budget: usize, caps: &[usize]) -> Vec<Vec<usize>> {
    fn rec(budget: usize, caps: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        match caps {
            [] => {
                if budget == 0 {
                    out.push(cur.clone());
                }
            }
            [last] => {
                if budget <= *last {
                    cur.push(budget);
                    out.push(cur.clone());
                    cur.pop();
                }
            }
            [first, rest @ ..] => {
                let rest_cap: usize = rest.iter().fold(0usize, |a, &c| a.saturating_add(c));
                let lo = budget.saturating_sub(rest_cap);
                for n in lo..=budget.min(*first) {
                    cur.push(n);
                    rec(budget - n, rest, cur, out);
                    cur.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    rec(budget, caps, &mut Vec::new(), &mut out);
    out
}

/// Split with the best recall for this query; ties go to higher AP, then to
/// the split closest to even, then to the lexicographically smaller split.
pub fn retrieve_per_query_oracle(
    candidates: &[CorpusCandidates],
    k: usize,
    gold: &Gold,
    query_id: &str,
) -> Result<(RankedList, BudgetSplit)> {
    if gold.values().all(|s| s.is_empty()) {
        return Err(Error::MissingGold(query_id.to_string()));
    }
    let mut sorted: Vec<&CorpusCandidates> = candidates.iter().collect();
    sorted.sort_by(|a, b| a.corpus_id.cmp(&b.corpus_id));

    let caps: Vec<usize> = sorted.iter().map(|c| c.corpus_size.min(k)).collect();
    let lists: Vec<&[ScoredHit]> = sorted
        .iter()
        .map(|c| c.require(k))
        .collect::<Result<_>>()?;
    let budget = k.min(caps.iter().sum());
    let n_gold: usize = gold.values().map(|s| s.len()).sum();

    // 1-based positions of gold hits inside each list.
    let gold_pos: Vec<Vec<usize>> = lists
        .iter()
        .map(|hits| {
            hits.iter()
                .enumerate()
                .filter(|(_, h)| gold.get(&h.corpus_id).is_some_and(|s| s.contains(&h.passage_id)))
                .map(|(i, _)| i + 1)
                .collect()
        })
        .collect();
    let found = |split: &[usize]| -> usize {
        split
            .iter()
            .zip(&gold_pos)
            .map(|(&n, pos)| pos.partition_point(|&p| p <= n))
            .sum()
    };

    let all = compositions(budget, &caps);
    let best_found = all.iter().map(|s| found(s)).max().unwrap_or(0);
    let even = budget as f64 / sorted.len().max(1) as f64;
    let imbalance = |s: &[usize]| s.iter().map(|&n| (n as f64 - even).abs()).sum::<f64>();

    let mut best: Option<(f64, Vec<usize>, RankedList)> = None;
    for split in all.into_iter().filter(|s| found(s) == best_found) {
        let mut pool: Vec<ScoredHit> = Vec::with_capacity(budget);
        for (hits, &n) in lists.iter().zip(&split) {
            pool.extend_from_slice(&hits[..n]);
        }
        let ranked = RankedList::from_unsorted(pool);
        let ap = average_precision(ranked.hits(), gold)?;
        let better = match &best {
            None => true,
            Some((best_ap, best_split, _)) => ap
                .total_cmp(best_ap)
                .then_with(|| imbalance(best_split).total_cmp(&imbalance(&split)))
                .then_with(|| best_split.cmp(&split))
                .is_gt(),
        };
        if better {
            best = Some((ap, split, ranked));
        }
    }
    let (_, split, ranked) = best.expect("at least one composition exists");
    debug_assert_eq!(recall(ranked.hits(), gold)?, best_found as f64 / n_gold as f64);
    let split = sorted
        .iter()
        .map(|c| c.corpus_id.clone())
        .zip(split)
        .collect();
    Ok((ranked, split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn fr(pairs: &[(&str, f64)]) -> Fractions {
        Fractions::new(pairs.iter().map(|(c, f)| (c.to_string(), *f)).collect()).unwrap()
    }

    fn sizes(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(c, n)| (c.to_string(), *n)).collect()
    }

    fn split(pairs: &[(&str, usize)]) -> BudgetSplit {
        sizes(pairs)
    }

    fn cands(corpus: &str, scores: &[f64], size: usize) -> CorpusCandidates {
        let hits = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoredHit {
                corpus_id: corpus.into(),
                passage_id: format!("{corpus}{i}"),
                score: s,
            })
            .collect();
        CorpusCandidates {
            corpus_id: corpus.into(),
            hits: RankedList::from_unsorted(hits),
            corpus_size: size,
        }
    }

    fn scores(list: &RankedList) -> Vec<f64> {
        list.iter().map(|h| h.score).collect()
    }

    #[test]
    fn apportion_examples() {
        let big = sizes(&[("A", 100), ("B", 100)]);
        assert_eq!(apportion_budget(10, &fr(&[("A", 0.5), ("B", 0.5)]), &big), split(&[("A", 5), ("B", 5)]));
        assert_eq!(apportion_budget(10, &fr(&[("A", 0.4), ("B", 0.6)]), &big), split(&[("A", 4), ("B", 6)]));
        assert_eq!(apportion_budget(10, &fr(&[("A", 0.25), ("B", 0.75)]), &big), split(&[("A", 3), ("B", 7)]));
        assert_eq!(apportion_budget(10, &fr(&[("A", 0.7), ("B", 0.3)]), &big), split(&[("A", 7), ("B", 3)]));
        assert_eq!(apportion_budget(0, &fr(&[("A", 0.5), ("B", 0.5)]), &big), split(&[("A", 0), ("B", 0)]));
    }

    #[test]
    fn apportion_grid_is_exact_at_k10() {
        let big = sizes(&[("A", 100), ("B", 100)]);
        for i in 0..=10 {
            let f = i as f64 / 10.0;
            let s = apportion_budget(10, &Fractions::for_known("A", f, &["A", "B"]).unwrap(), &big);
            assert_eq!(s["A"], i, "fraction {f}");
            assert_eq!(s["B"], 10 - i);
        }
    }

    #[test]
    fn apportion_clamps_and_redistributes() {
        let s = apportion_budget(10, &fr(&[("A", 0.8), ("B", 0.2)]), &sizes(&[("A", 3), ("B", 50)]));
        assert_eq!(s, split(&[("A", 3), ("B", 7)]));
        // Excess goes to a zero-fraction corpus when nothing else has room.
        let s = apportion_budget(10, &fr(&[("A", 1.0), ("B", 0.0)]), &sizes(&[("A", 6), ("B", 50)]));
        assert_eq!(s, split(&[("A", 6), ("B", 4)]));
        // Total capacity below k.
        let s = apportion_budget(10, &fr(&[("A", 0.5), ("B", 0.5)]), &sizes(&[("A", 2), ("B", 3)]));
        assert_eq!(s, split(&[("A", 2), ("B", 3)]));
    }

    #[test]
    fn fractions_validation() {
        assert!(Fractions::new(BTreeMap::from([("A".into(), 0.5), ("B".into(), 0.6)])).is_err());
        assert!(Fractions::new(BTreeMap::from([("A".into(), -0.1), ("B".into(), 1.1)])).is_err());
        assert!(Fractions::for_known("A", 1.5, &["A", "B"]).is_err());
        assert!(Fractions::for_known("C", 0.5, &["A", "B"]).is_err());
        let three = Fractions::for_known("A", 0.4, &["A", "B", "C"]).unwrap();
        assert!((three.get("B") - 0.3).abs() < 1e-12);
    }

    #[test]
    fn selector_grammar() {
        assert_eq!("naive".parse::<StrategySelector>().unwrap(), StrategySelector::Naive);
        assert_eq!("oracle".parse::<StrategySelector>().unwrap(), StrategySelector::Oracle);
        assert_eq!(
            "per-task:0.5".parse::<StrategySelector>().unwrap(),
            StrategySelector::PerTask(0.5)
        );
        for bad in ["per-task:1.5", "per-task:-0.1", "per-task:", "per-task:x", "merge", "per-task:NaN"] {
            assert!(bad.parse::<StrategySelector>().is_err(), "{bad}");
        }
        assert_eq!(StrategySelector::PerTask(0.3).to_string(), "per-task:0.3");
    }

    #[test]
    fn naive_merge_examples() {
        let a = cands("A", &[9.0, 7.0], 2);
        let b = cands("B", &[8.0, 1.0], 2);
        let (list, s) = retrieve_naive(&[a.clone(), b.clone()], 3).unwrap();
        assert_eq!(scores(&list), [9.0, 8.0, 7.0]);
        assert_eq!(s, split(&[("A", 2), ("B", 1)]));
        assert!(retrieve_naive(&[a.clone(), b], 0).unwrap().0.is_empty());
        let empty = cands("B", &[], 0);
        let (list, _) = retrieve_naive(&[a.clone(), empty], 2).unwrap();
        assert_eq!(list, a.hits);
    }

    #[test]
    fn naive_requires_enough_candidates() {
        let a = cands("A", &[9.0], 5);
        assert!(matches!(
            retrieve_naive(&[a], 3),
            Err(Error::InsufficientCandidates { need: 3, have: 1, .. })
        ));
    }

    #[test]
    fn per_task_examples() {
        let a = cands("A", &[9.0, 7.0], 2);
        let b = cands("B", &[8.0, 1.0], 2);
        let both = [a.clone(), b];
        let list = retrieve_per_task(&both, &split(&[("A", 1), ("B", 1)])).unwrap();
        assert_eq!(scores(&list), [9.0, 8.0]);
        let list = retrieve_per_task(&both, &split(&[("A", 2), ("B", 0)])).unwrap();
        assert_eq!(list, a.hits);
        assert!(retrieve_per_task(&both, &split(&[("A", 0), ("B", 0)])).unwrap().is_empty());
    }

    fn gold(a: &str, b: &str) -> Gold {
        Gold::from([
            ("A".to_string(), BTreeSet::from([a.to_string()])),
            ("B".to_string(), BTreeSet::from([b.to_string()])),
        ])
    }

    #[test]
    fn oracle_forced_optimum() {
        let a = cands("A", &[5.0, 4.0], 10);
        let b = cands("B", &[1.0, 0.5], 10);
        let (list, s) = retrieve_per_query_oracle(&[a, b], 2, &gold("A0", "B0"), "q").unwrap();
        assert_eq!(s, split(&[("A", 1), ("B", 1)]));
        assert_eq!(recall(list.hits(), &gold("A0", "B0")).unwrap(), 1.0);
    }

    #[test]
    fn oracle_finds_deep_gold_that_naive_misses() {
        let k = 4;
        let a = cands("A", &[10.0, 9.0, 8.0, 7.0], 50);
        let b = cands("B", &[3.0, 2.0, 1.0, 0.5], 50);
        let g = gold("A0", "B2");
        let (naive, _) = retrieve_naive(&[a.clone(), b.clone()], k).unwrap();
        assert_eq!(recall(naive.hits(), &g).unwrap(), 0.5);
        let (list, s) = retrieve_per_query_oracle(&[a, b], k, &g, "q").unwrap();
        assert_eq!(recall(list.hits(), &g).unwrap(), 1.0);
        assert_eq!(s, split(&[("A", 1), ("B", 3)]));
    }

    #[test]
    fn oracle_tie_break_when_nothing_found() {
        let a = cands("A", &[5.0, 4.0, 3.0, 2.0, 1.0], 10);
        let b = cands("B", &[5.0, 4.0, 3.0, 2.0, 1.0], 10);
        let g = gold("zz", "yy");
        let (_, s) = retrieve_per_query_oracle(&[a.clone(), b.clone()], 4, &g, "q").unwrap();
        assert_eq!(s, split(&[("A", 2), ("B", 2)]));
        let (_, s) = retrieve_per_query_oracle(&[a, b], 5, &g, "q").unwrap();
        assert_eq!(s, split(&[("A", 2), ("B", 3)]));
    }

    #[test]
    fn oracle_needs_gold() {
        let a = cands("A", &[1.0], 1);
        assert!(matches!(
            retrieve_per_query_oracle(&[a], 1, &Gold::new(), "q7"),
            Err(Error::MissingGold(id)) if id == "q7"
        ));
    }

    #[test]
    fn compositions_respect_capacity() {
        assert_eq!(compositions(3, &[2, 5]), vec![vec![0, 3], vec![1, 2], vec![2, 1]]);
        assert_eq!(compositions(2, &[1, 1, 1]).len(), 3);
        assert!(compositions(3, &[1, 1]).is_empty());
    }
}
