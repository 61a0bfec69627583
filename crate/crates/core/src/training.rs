//! Contrastive training of the shared linear encoder.
//!
//! Each example pairs a query with its positive passage and one negative
//! drawn uniformly from the rest of the known corpus. The per-example loss is
//! `-log(exp(s+) / (exp(s+) + exp(s-)))` with `s = E(q) . E(p)`, averaged over
//! a mini-batch and minimized by plain SGD.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Passage, TrainingPair};
use crate::embedding::{LinearEncoder, SparseVector};
use crate::error::{Error, Result};
use crate::rng::{shuffle, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 10,
            learning_rate: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub checksum: u64,
}

/// Stable form: `log(1 + exp(s_neg - s_pos))`.
pub fn contrastive_loss(s_pos: f64, s_neg: f64) -> f64 {
    softplus(s_neg - s_pos)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient with respect to the encoder weights, stored by column (bucket).
///
/// Only buckets present in the query, positive or negative are non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    out_dim: usize,
    columns: BTreeMap<u32, Vec<f64>>,
}

impl SparseGradient {
    pub fn new(out_dim: usize) -> Self {
        Self {
            out_dim,
            columns: BTreeMap::new(),
        }
    }

    fn column(&mut self, j: u32) -> &mut Vec<f64> {
        let d = self.out_dim;
        self.columns.entry(j).or_insert_with(|| vec![0.0; d])
    }

    fn axpy(&mut self, j: u32, alpha: f64, v: &[f64]) {
        for (c, x) in self.column(j).iter_mut().zip(v) {
            *c += alpha * x;
        }
    }

    pub fn add_assign(&mut self, other: &SparseGradient) {
        for (&j, col) in &other.columns {
            self.axpy(j, 1.0, col);
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.columns.iter().map(|(&j, c)| (j, c.as_slice()))
    }

    pub fn is_zero(&self) -> bool {
        self.columns.values().flatten().all(|&x| x == 0.0)
    }

    /// Row-major `out_dim x n_buckets` dense copy.
    pub fn to_dense(&self, n_buckets: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim * n_buckets];
        for (&j, col) in &self.columns {
            for (r, &x) in col.iter().enumerate() {
                out[r * n_buckets + j as usize] = x;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and exact weight gradient for one (query, positive, negative) triple
/// of already featurized texts.
///
/// With `u = Wq`, `v+ = Wp`, `v- = Wn` and `g = sigmoid(s- - s+)`:
/// `dL/dW = g [ (v- - v+) q^T + u (n - p)^T ]`.
pub fn example_gradient(
    encoder: &LinearEncoder,
    query: &SparseVector,
    positive: &SparseVector,
    negative: &SparseVector,
) -> (f64, SparseGradient) {
    let u = encoder.project(query);
    let vp = encoder.project(positive);
    let vn = encoder.project(negative);
    let s_pos = dot(&u, &vp);
    let s_neg = dot(&u, &vn);
    let loss = contrastive_loss(s_pos, s_neg);
    let g = sigmoid(s_neg - s_pos);

    let mut grad = SparseGradient::new(encoder.out_dim());
    let diff: Vec<f64> = vn.iter().zip(&vp).map(|(n, p)| n - p).collect();
    for (j, x) in query.iter() {
        grad.axpy(j, g * x, &diff);
    }
    for (j, x) in negative.iter() {
        grad.axpy(j, g * x, &u);
    }
    for (j, x) in positive.iter() {
        grad.axpy(j, -g * x, &u);
    }
    (loss, grad)
}

/// Gradient of the contrastive loss for raw texts, featurized the way
/// training sees them (query and passage truncation applied).
pub fn loss_gradient(
    encoder: &LinearEncoder,
    query_text: &str,
    positive_text: &str,
    negative_text: &str,
) -> SparseGradient {
    let q = encoder.featurize_query(query_text);
    let p = encoder.featurize_passage(positive_text);
    let n = encoder.featurize_passage(negative_text);
    example_gradient(encoder, &q, &p, &n).1
}

/// Index of a passage drawn uniformly from `corpus` minus position `exclude`.
pub fn sample_negative_index(rng: &mut SplitMix64, corpus_len: usize, exclude: usize) -> usize {
    debug_assert!(corpus_len >= 2 && exclude < corpus_len);
    let r = rng.next_index(corpus_len - 1);
    if r >= exclude {
        r + 1
    } else {
        r
    }
}

pub fn sample_negative<'c>(
    rng: &mut SplitMix64,
    corpus: &'c Corpus,
    exclude: &str,
) -> Result<&'c Passage> {
    if corpus.len() < 2 {
        return Err(Error::CorpusTooSmall {
            corpus: corpus.id().to_string(),
            size: corpus.len(),
        });
    }
    let excl = corpus.position(exclude).ok_or_else(|| Error::UnknownPositive {
        corpus: corpus.id().to_string(),
        passage: exclude.to_string(),
    })?;
    Ok(&corpus.passages()[sample_negative_index(rng, corpus.len(), excl)])
}

/// Mini-batch SGD over `pairs`, starting from `init`.
///
/// Per epoch the example order is reshuffled and each example draws one
/// fresh negative. All randomness comes from `config.seed`.
pub fn train_encoder(
    pairs: &[TrainingPair],
    corpus: &Corpus,
    init: LinearEncoder,
    config: &TrainConfig,
) -> Result<(LinearEncoder, TrainReport)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if corpus.len() < 2 {
        return Err(Error::CorpusTooSmall {
            corpus: corpus.id().to_string(),
            size: corpus.len(),
        });
    }

    let mut encoder = init;
    let passages: Vec<SparseVector> = corpus
        .passages()
        .iter()
        .map(|p| encoder.featurize_passage(&p.text))
        .collect();
    let mut examples = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let pos = (pair.corpus_id == corpus.id())
            .then(|| corpus.position(&pair.positive_passage_id))
            .flatten()
            .ok_or_else(|| Error::UnknownPositive {
                corpus: pair.corpus_id.clone(),
                passage: pair.positive_passage_id.clone(),
            })?;
        examples.push((encoder.featurize_query(&pair.query_text), pos));
    }

    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let nb = encoder.n_buckets();

    for _ in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = SparseGradient::new(encoder.out_dim());
            for &i in batch {
                let (query, pos) = &examples[i];
                let neg = sample_negative_index(&mut rng, passages.len(), *pos);
                let (loss, g) = example_gradient(&encoder, query, &passages[*pos], &passages[neg]);
                loss_sum += loss;
                grad.add_assign(&g);
            }
            let step = config.learning_rate / batch.len() as f64;
            let weights = encoder.weights_mut();
            for (j, col) in grad.columns() {
                for (r, &gx) in col.iter().enumerate() {
                    let w = &mut weights[r * nb + j as usize];
                    *w = (f64::from(*w) - step * gx) as f32;
                }
            }
        }
        epoch_losses.push(loss_sum / examples.len() as f64);
    }

    let checksum = encoder.checksum();
    Ok((
        encoder,
        TrainReport {
            epoch_losses,
            checksum,
        },
    ))
}
