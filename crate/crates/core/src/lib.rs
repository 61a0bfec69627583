//! Retrieval under a fixed budget across several corpora.
//!
//! A query has relevant passages in more than one corpus; the engine returns
//! `k` passages in total and the allocation strategy decides how many come
//! from each corpus. A linear dual encoder over hashed bag-of-words features
//! is trained on one corpus only, which makes its scores on the other corpus
//! systematically lower and exposes the bias the strategies must correct.

pub mod allocation;
pub mod data;
pub mod embedding;
pub mod entity;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod metrics;
pub mod rng;
pub mod search;
pub mod synthetic;
pub mod training;
pub mod tuning;

pub use allocation::{AllocationStrategy, BudgetSplit, Fractions, StrategySelector};
pub use data::{BenchmarkManifest, Corpus, Gold, Passage, Query, QuerySet, TrainingPair};
pub use embedding::{EmbeddingMatrix, FeaturizerConfig, LinearEncoder, QueryEmbedder};
pub use error::{Error, Result};
pub use evaluation::{CandidatePool, EvalReport};
pub use search::{RankedList, ScoredHit};
