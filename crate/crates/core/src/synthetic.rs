//! Desk-scale two-distribution benchmark generator.
//!
//! Each query names an entity by a handful of tokens unique to it. Corpus A
//! (the known distribution) holds the entity's gold passage written with
//! style-A filler, plus near-duplicates that share half of the entity tokens.
//! Corpus B holds the gold passage written with filler from a disjoint
//! style-B vocabulary. Training pairs come from corpus A only: each
//! near-duplicate is a (title, description) example of its own entity.

use std::collections::{BTreeSet, HashSet};

use crate::data::{Corpus, Gold, Passage, Query, QuerySet, TrainingPair};
use crate::error::{Error, Result};
use crate::rng::{sample_without_replacement, shuffle, SplitMix64};

pub const KNOWN_CORPUS_ID: &str = "A";
pub const UNKNOWN_CORPUS_ID: &str = "B";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_pairs: usize,
    pub n_distractors_per_query: usize,
    /// Entity tokens per query (at least 2, so "half" is a strict subset).
    pub entity_tokens: usize,
    pub filler_a_len: usize,
    pub filler_b_len: usize,
    pub vocab_a: usize,
    pub vocab_b: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_pairs: 100,
            n_distractors_per_query: 5,
            entity_tokens: 4,
            filler_a_len: 20,
            filler_b_len: 40,
            vocab_a: 200,
            vocab_b: 200,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_pairs == 0 {
            return fail("n_pairs must be at least 1");
        }
        if self.entity_tokens < 2 {
            return fail("entity_tokens must be at least 2");
        }
        if (self.filler_a_len > 0 && self.vocab_a == 0) || (self.filler_b_len > 0 && self.vocab_b == 0)
        {
            return fail("style vocabularies must be non-empty when filler is requested");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticBenchmark {
    pub corpus_a: Corpus,
    pub corpus_b: Corpus,
    pub queries: QuerySet,
    pub train_a: Vec<TrainingPair>,
    /// Entity tokens of each query, aligned with `queries`.
    pub entities: Vec<Vec<String>>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Fresh pronounceable lowercase words, never repeating within one generator.
struct WordSource {
    rng: SplitMix64,
    used: HashSet<String>,
}

impl WordSource {
    fn next_word(&mut self) -> String {
        loop {
            let syllables = 2 + self.rng.next_index(3);
            let mut w = String::with_capacity(syllables * 2 + 1);
            for _ in 0..syllables {
                w.push(CONSONANTS[self.rng.next_index(CONSONANTS.len())] as char);
                w.push(VOWELS[self.rng.next_index(VOWELS.len())] as char);
            }
            if self.rng.next_index(2) == 0 {
                w.push(CONSONANTS[self.rng.next_index(CONSONANTS.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.next_word()).collect()
    }
}

fn passage_text(mut tokens: Vec<String>, rng: &mut SplitMix64) -> String {
    shuffle(&mut tokens, rng);
    tokens.join(" ")
}

fn filler(vocab: &[String], len: usize, rng: &mut SplitMix64) -> Vec<String> {
    (0..len)
        .map(|_| vocab[rng.next_index(vocab.len())].clone())
        .collect()
}

pub fn generate_synthetic_benchmark(config: &SyntheticConfig) -> Result<SyntheticBenchmark> {
    config.validate()?;
    let mut master = SplitMix64::new(config.seed);
    let mut words = WordSource {
        rng: master.fork(),
        used: HashSet::new(),
    };
    let mut rng = master.fork();

    let vocab_a = words.words(config.vocab_a);
    let vocab_b = words.words(config.vocab_b);

    let mut passages_a = Vec::new();
    let mut passages_b = Vec::new();
    let mut queries = Vec::new();
    let mut train_a = Vec::new();
    let mut entities = Vec::new();
    let half = config.entity_tokens / 2;

    for i in 0..config.n_pairs {
        let entity = words.words(config.entity_tokens);
        let gold_a = format!("a{i:05}");
        let gold_b = format!("b{i:05}");

        let mut tokens = entity.clone();
        tokens.extend(filler(&vocab_a, config.filler_a_len, &mut rng));
        passages_a.push(Passage::new(&gold_a, passage_text(tokens, &mut rng)).with_title(entity.join(" ")));

        let mut tokens = entity.clone();
        tokens.extend(filler(&vocab_b, config.filler_b_len, &mut rng));
        passages_b.push(Passage::new(&gold_b, passage_text(tokens, &mut rng)).with_title(entity.join(" ")));

        for j in 0..config.n_distractors_per_query {
            let mut own: Vec<String> = sample_without_replacement(entity.len(), half, &mut rng)
                .into_iter()
                .map(|t| entity[t].clone())
                .collect();
            own.extend(words.words(config.entity_tokens - half));
            let title = own.join(" ");
            let mut tokens = own;
            tokens.extend(filler(&vocab_a, config.filler_a_len, &mut rng));
            let id = format!("a{i:05}d{j:02}");
            passages_a.push(Passage::new(&id, passage_text(tokens, &mut rng)).with_title(&title));
            train_a.push(TrainingPair {
                query_text: title,
                positive_passage_id: id,
                corpus_id: KNOWN_CORPUS_ID.to_string(),
            });
        }

        let mut relevant = Gold::new();
        relevant.insert(KNOWN_CORPUS_ID.to_string(), BTreeSet::from([gold_a]));
        relevant.insert(UNKNOWN_CORPUS_ID.to_string(), BTreeSet::from([gold_b]));
        queries.push(Query {
            id: format!("q{i:05}"),
            text: entity.join(" "),
            relevant,
        });
        entities.push(entity);
    }

    Ok(SyntheticBenchmark {
        corpus_a: Corpus::new(KNOWN_CORPUS_ID, passages_a)?,
        corpus_b: Corpus::new(UNKNOWN_CORPUS_ID, passages_b)?,
        queries: QuerySet::new(queries),
        train_a,
        entities,
    })
}
