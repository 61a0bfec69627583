//! Corpora, queries with per-corpus relevance judgments, and training pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relevance judgments of one query: corpus id to the set of gold passage ids.
pub type Gold = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    /// Optional short title; entity-matching sources use it as query text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            title: None,
        }
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }
}

/// An identified collection of passages drawn from a single distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    id: String,
    passages: Vec<Passage>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(id: impl Into<String>, passages: Vec<Passage>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidConfig("corpus id must be non-empty".into()));
        }
        let mut index = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if p.id.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "passage {i} of corpus `{id}` has an empty id"
                )));
            }
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicatePassageId(p.id.clone()));
            }
        }
        Ok(Self {
            id,
            passages,
            index,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn position(&self, passage_id: &str) -> Option<usize> {
        self.index.get(passage_id).copied()
    }

    pub fn get(&self, passage_id: &str) -> Option<&Passage> {
        self.position(passage_id).map(|i| &self.passages[i])
    }

    pub fn contains(&self, passage_id: &str) -> bool {
        self.index.contains_key(passage_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub relevant: Gold,
}

impl Query {
    /// Number of gold passages across all corpora.
    pub fn gold_count(&self) -> usize {
        self.relevant.values().map(BTreeSet::len).sum()
    }

    /// True when the gold set touches fewer than two corpora.
    pub fn is_single_distribution(&self) -> bool {
        self.relevant.values().filter(|s| !s.is_empty()).count() < 2
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuerySet {
    pub queries: Vec<Query>,
}

impl QuerySet {
    pub fn new(queries: Vec<Query>) -> Self {
        Self { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Query> {
        self.queries.iter()
    }

    /// Checks every relevance reference against the given corpora.
    pub fn validate(&self, corpora: &[&Corpus]) -> Result<()> {
        for q in &self.queries {
            for (corpus_id, ids) in &q.relevant {
                let corpus = corpora.iter().find(|c| c.id() == corpus_id);
                for pid in ids {
                    if !corpus.is_some_and(|c| c.contains(pid)) {
                        return Err(Error::DanglingReference {
                            query: q.id.clone(),
                            corpus: corpus_id.clone(),
                            passage: pid.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Queries whose gold set spans a single corpus.
    pub fn single_distribution_ids(&self) -> Vec<&str> {
        self.queries
            .iter()
            .filter(|q| q.is_single_distribution())
            .map(|q| q.id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query_text: String,
    #[serde(rename = "positive_id")]
    pub positive_passage_id: String,
    pub corpus_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
    /// MDRE embedding file for this corpus, once embedded or imported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

/// JSON document tying a benchmark's files together.
///
/// Relative paths resolve against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub corpora: Vec<CorpusEntry>,
    pub queries_val: PathBuf,
    pub queries_test: PathBuf,
    pub training_pairs: PathBuf,
    pub known_corpus_id: String,
    /// Trained linear encoder checkpoint (MDRW).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<PathBuf>,
    /// Externally produced query vectors (MDRE keyed by query id), used when
    /// no encoder checkpoint is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embeddings: Option<PathBuf>,
}

impl BenchmarkManifest {
    pub fn validate(&self) -> Result<()> {
        if !self.corpora.iter().any(|c| c.id == self.known_corpus_id) {
            return Err(Error::InvalidConfig(format!(
                "known_corpus_id `{}` is not among the listed corpora",
                self.known_corpus_id
            )));
        }
        let mut ids = BTreeSet::new();
        for c in &self.corpora {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::InvalidConfig(format!("corpus `{}` listed twice", c.id)));
            }
        }
        let mut paths = BTreeSet::new();
        let all = self
            .corpora
            .iter()
            .map(|c| &c.path)
            .chain([&self.queries_val, &self.queries_test, &self.training_pairs]);
        for p in all {
            if !paths.insert(p) {
                return Err(Error::InvalidConfig(format!(
                    "path {} listed more than once",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn corpus_ids(&self) -> Vec<&str> {
        self.corpora.iter().map(|c| c.id.as_str()).collect()
    }
}
