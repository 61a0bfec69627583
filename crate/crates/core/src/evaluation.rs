//! Run-level evaluation of allocation strategies and the zero-shot rank
//! diagnostics used to check that retrieval is non-trivial.
//!
//! Scoring every query against every corpus dominates the cost of an
//! evaluation, so it happens once in [`CandidatePool::build`]: each query
//! keeps its exact top-`depth` list per corpus, and every strategy at every
//! `k <= depth` is then evaluated from prefixes of those lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    apportion_budget, format_split, retrieve_naive, retrieve_per_query_oracle, retrieve_per_task,
    AllocationStrategy, BudgetSplit, CorpusCandidates,
};
use crate::data::{Gold, QuerySet};
use crate::embedding::{EmbeddingMatrix, QueryEmbedder};
use crate::error::{Error, Result};
use crate::metrics::{average_precision, recall};
use crate::search::{rank_of, score_all, top_k};

#[derive(Debug, Clone, PartialEq)]
pub struct QueryCandidates {
    pub query_id: String,
    pub gold: Gold,
    pub lists: Vec<CorpusCandidates>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    depth: usize,
    queries: Vec<QueryCandidates>,
}

fn find_matrix<'m>(matrices: &'m [EmbeddingMatrix], corpus: &str) -> Result<&'m EmbeddingMatrix> {
    matrices
        .iter()
        .find(|m| m.corpus_id() == corpus)
        .ok_or_else(|| Error::MissingEmbeddings(corpus.to_string()))
}

fn check_gold(queries: &QuerySet, matrices: &[EmbeddingMatrix]) -> Result<()> {
    for q in queries.iter() {
        if q.gold_count() == 0 {
            return Err(Error::MissingGold(q.id.clone()));
        }
        for (corpus, ids) in &q.relevant {
            let m = find_matrix(matrices, corpus)?;
            if let Some(missing) = ids.iter().find(|id| m.position(id).is_none()) {
                return Err(Error::GoldNotEmbedded {
                    query: q.id.clone(),
                    corpus: corpus.clone(),
                    passage: missing.clone(),
                });
            }
        }
    }
    Ok(())
}

impl CandidatePool {
    /// Scores every query against every corpus and keeps the top `depth`
    /// hits of each. Queries are processed in parallel; output order follows
    /// the query set.
    pub fn build(
        queries: &QuerySet,
        matrices: &[EmbeddingMatrix],
        embedder: &dyn QueryEmbedder,
        depth: usize,
    ) -> Result<Self> {
        check_gold(queries, matrices)?;
        let mut sorted: Vec<&EmbeddingMatrix> = matrices.iter().collect();
        sorted.sort_by(|a, b| a.corpus_id().cmp(b.corpus_id()));

        let built: Vec<QueryCandidates> = queries
            .queries
            .par_iter()
            .map(|q| {
                let vector = embedder.embed_query(q)?;
                let lists = sorted
                    .iter()
                    .map(|m| {
                        let scores = score_all(&vector, m)?;
                        Ok(CorpusCandidates {
                            corpus_id: m.corpus_id().to_string(),
                            hits: top_k(&scores, m.ids(), depth, m.corpus_id()),
                            corpus_size: m.len(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(QueryCandidates {
                    query_id: q.id.clone(),
                    gold: q.relevant.clone(),
                    lists,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            depth,
            queries: built,
        })
    }

    pub fn from_parts(depth: usize, queries: Vec<QueryCandidates>) -> Self {
        Self { depth, queries }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[QueryCandidates] {
        &self.queries
    }

    /// Pool restricted to the given query positions.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            depth: self.depth,
            queries: positions.iter().map(|&i| self.queries[i].clone()).collect(),
        }
    }

    /// Total passages across corpora (taken from the first query's lists).
    pub fn total_passages(&self) -> usize {
        self.queries
            .first()
            .map_or(0, |q| q.lists.iter().map(|c| c.corpus_size).sum())
    }

    /// Per-query results of `strategy` at budget `k`, in pool order.
    pub fn run(&self, strategy: &AllocationStrategy, k: usize) -> Result<Vec<QueryResult>> {
        if k > self.depth {
            return Err(Error::InvalidConfig(format!(
                "budget {k} exceeds candidate depth {}",
                self.depth
            )));
        }
        self.queries
            .par_iter()
            .map(|q| evaluate_query(q, strategy, k))
            .collect()
    }

    pub fn evaluate(&self, strategy: &AllocationStrategy, label: &str, k: usize) -> Result<EvalReport> {
        Ok(EvalReport::from_results(k, label, self.run(strategy, k)?))
    }
}

fn evaluate_query(q: &QueryCandidates, strategy: &AllocationStrategy, k: usize) -> Result<QueryResult> {
    let (ranked, split) = match strategy {
        AllocationStrategy::NaiveMerge => retrieve_naive(&q.lists, k)?,
        AllocationStrategy::PerTask(fractions) => {
            let sizes = q
                .lists
                .iter()
                .map(|c| (c.corpus_id.clone(), c.corpus_size))
                .collect();
            let split = apportion_budget(k, fractions, &sizes);
            (retrieve_per_task(&q.lists, &split)?, split)
        }
        AllocationStrategy::PerQueryOracle => retrieve_per_query_oracle(&q.lists, k, &q.gold, &q.query_id)?,
    };
    Ok(QueryResult {
        query_id: q.query_id.clone(),
        recall: recall(ranked.hits(), &q.gold)?,
        ap: average_precision(ranked.hits(), &q.gold)?,
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub recall: f64,
    pub ap: f64,
    pub split: BudgetSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub strategy: String,
    pub mean_recall: f64,
    pub mean_ap: f64,
    /// Sorted by query id.
    pub per_query: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub k: usize,
    pub strategy: String,
    pub mean_recall: f64,
    pub mean_ap: f64,
    pub n_queries: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn from_results(k: usize, strategy: &str, mut per_query: Vec<QueryResult>) -> Self {
        per_query.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        Self {
            k,
            strategy: strategy.to_string(),
            mean_recall: mean(per_query.iter().map(|r| r.recall)),
            mean_ap: mean(per_query.iter().map(|r| r.ap)),
            per_query,
        }
    }

    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            k: self.k,
            strategy: self.strategy.clone(),
            mean_recall: self.mean_recall,
            mean_ap: self.mean_ap,
            n_queries: self.per_query.len(),
        }
    }

    /// Mean share of each query's retrieved passages that came from `corpus`.
    pub fn budget_share(&self, corpus: &str) -> f64 {
        mean(self.per_query.iter().filter_map(|r| {
            let total: usize = r.split.values().sum();
            (total > 0).then(|| r.split.get(corpus).copied().unwrap_or(0) as f64 / total as f64)
        }))
    }

    /// `query_id,recall,ap,split` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,recall,ap,split\n");
        for r in &self.per_query {
            let _ = writeln!(out, "{},{},{},{}", csv_field(&r.query_id), r.recall, r.ap, format_split(&r.split));
        }
        out
    }

    /// One-line percentage summary, e.g. `naive k=10 recall 58.71 AP 45.99`.
    pub fn headline(&self) -> String {
        format!(
            "{} k={} recall {:.2} AP {:.2} (n={})",
            self.strategy,
            self.k,
            100.0 * self.mean_recall,
            100.0 * self.mean_ap,
            self.per_query.len()
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Share of gold passages that live in `corpus`, over the whole query set.
pub fn gold_share(queries: &QuerySet, corpus: &str) -> f64 {
    let total: usize = queries.iter().map(|q| q.gold_count()).sum();
    let in_corpus: usize = queries
        .iter()
        .map(|q| q.relevant.get(corpus).map_or(0, |s| s.len()))
        .sum();
    if total == 0 {
        0.0
    } else {
        in_corpus as f64 / total as f64
    }
}

pub fn evaluate_run(
    queries: &QuerySet,
    matrices: &[EmbeddingMatrix],
    embedder: &dyn QueryEmbedder,
    strategy: &AllocationStrategy,
    label: &str,
    k: usize,
) -> Result<EvalReport> {
    CandidatePool::build(queries, matrices, embedder, k)?.evaluate(strategy, label, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub corpus_id: String,
    pub query_id: String,
    pub passage_id: String,
    pub rank: usize,
    pub normalized_rank: f64,
}

/// Position of each gold passage in its corpus' full ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankDiagnostics {
    /// Sorted by corpus, then query, then passage.
    pub records: Vec<RankRecord>,
}

impl RankDiagnostics {
    pub fn for_corpus<'a>(&'a self, corpus: &'a str) -> impl Iterator<Item = &'a RankRecord> + 'a {
        self.records.iter().filter(move |r| r.corpus_id == corpus)
    }

    /// Median normalized rank in `corpus` (lower median for even counts).
    pub fn median_normalized_rank(&self, corpus: &str) -> Option<f64> {
        let mut v: Vec<f64> = self.for_corpus(corpus).map(|r| r.normalized_rank).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[(v.len() - 1) / 2])
    }

    /// Counts of normalized ranks in `bins` equal-width bins over (0, 1].
    pub fn histogram(&self, corpus: &str, bins: usize) -> Vec<usize> {
        let mut counts = vec![0; bins];
        if bins == 0 {
            return counts;
        }
        for r in self.for_corpus(corpus) {
            let b = ((r.normalized_rank * bins as f64).ceil() as usize).clamp(1, bins) - 1;
            counts[b] += 1;
        }
        counts
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("corpus_id,query_id,passage_id,rank,normalized_rank\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&r.corpus_id),
                csv_field(&r.query_id),
                csv_field(&r.passage_id),
                r.rank,
                r.normalized_rank
            );
        }
        out
    }
}

pub fn rank_diagnostics(
    queries: &QuerySet,
    matrices: &[EmbeddingMatrix],
    embedder: &dyn QueryEmbedder,
) -> Result<RankDiagnostics> {
    check_gold(queries, matrices)?;
    let per_query: Vec<Vec<RankRecord>> = queries
        .queries
        .par_iter()
        .map(|q| {
            let vector = embedder.embed_query(q)?;
            let mut out = Vec::new();
            for (corpus, ids) in &q.relevant {
                let m = find_matrix(matrices, corpus)?;
                let scores = score_all(&vector, m)?;
                for pid in ids {
                    let pos = m.position(pid).expect("checked by check_gold");
                    let rank = rank_of(&scores, m.ids(), pos);
                    out.push(RankRecord {
                        corpus_id: corpus.clone(),
                        query_id: q.id.clone(),
                        passage_id: pid.clone(),
                        rank,
                        normalized_rank: rank as f64 / m.len() as f64,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<RankRecord> = per_query.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (&a.corpus_id, &a.query_id, &a.passage_id).cmp(&(&b.corpus_id, &b.query_id, &b.passage_id))
    });
    Ok(RankDiagnostics { records })
}

/// Mean recall per strategy label, for quick side-by-side tables.
pub fn mean_recalls(reports: &[EvalReport]) -> BTreeMap<String, f64> {
    reports
        .iter()
        .map(|r| (r.strategy.clone(), r.mean_recall))
        .collect()
}
