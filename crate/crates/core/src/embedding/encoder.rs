use rayon::prelude::*;

use super::{
    featurize, featurize_truncated, fnv1a64, EmbeddingMatrix, FeaturizerConfig, SparseVector,
    PASSAGE_MAX_TOKENS, QUERY_MAX_TOKENS,
};
use crate::data::{Corpus, Query};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Hashed bag-of-words followed by a dense `out_dim × n_buckets` projection.
///
/// Queries and passages go through the same weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    featurizer: FeaturizerConfig,
    out_dim: usize,
    /// Row-major, `out_dim` rows of `n_buckets` columns.
    weights: Vec<f32>,
    seed: u64,
}

impl LinearEncoder {
    pub const DEFAULT_OUT_DIM: usize = 64;

    /// Gaussian weights with variance `1/sqrt(n_buckets)`, drawn
    /// row-major from Box–Muller pairs over the SplitMix64 stream of `seed`.
    pub fn init(featurizer: FeaturizerConfig, out_dim: usize, seed: u64) -> Result<Self> {
        featurizer.validate()?;
        if out_dim == 0 {
            return Err(Error::InvalidConfig("out_dim must be positive".into()));
        }
        let n = out_dim * featurizer.n_buckets as usize;
        let std = f64::from(featurizer.n_buckets).powf(-0.25);
        let mut rng = SplitMix64::new(seed);
        let mut weights = Vec::with_capacity(n);
        while weights.len() < n {
            let (a, b) = rng.next_gaussian_pair();
            weights.push((a * std) as f32);
            if weights.len() < n {
                weights.push((b * std) as f32);
            }
        }
        Ok(Self {
            featurizer,
            out_dim,
            weights,
            seed,
        })
    }

    pub fn from_weights(
        featurizer: FeaturizerConfig,
        out_dim: usize,
        weights: Vec<f32>,
        seed: u64,
    ) -> Result<Self> {
        featurizer.validate()?;
        let expected = out_dim * featurizer.n_buckets as usize;
        if weights.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} weights for {out_dim}x{}, got {}",
                featurizer.n_buckets,
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            let nb = featurizer.n_buckets as usize;
            return Err(Error::NonFinite {
                row: i / nb,
                col: i % nb,
            });
        }
        Ok(Self {
            featurizer,
            out_dim,
            weights,
            seed,
        })
    }

    pub fn featurizer(&self) -> &FeaturizerConfig {
        &self.featurizer
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn n_buckets(&self) -> usize {
        self.featurizer.n_buckets as usize
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f32 {
        self.weights[row * self.n_buckets() + col]
    }

    /// `W x` accumulated in f64.
    pub fn project(&self, x: &SparseVector) -> Vec<f64> {
        let nb = self.n_buckets();
        let mut out = vec![0.0f64; self.out_dim];
        for (j, v) in x.iter() {
            let j = j as usize;
            for (r, o) in out.iter_mut().enumerate() {
                *o += f64::from(self.weights[r * nb + j]) * v;
            }
        }
        out
    }

    pub fn featurize_query(&self, text: &str) -> SparseVector {
        featurize_truncated(text, &self.featurizer, QUERY_MAX_TOKENS)
    }

    pub fn featurize_passage(&self, text: &str) -> SparseVector {
        featurize_truncated(text, &self.featurizer, PASSAGE_MAX_TOKENS)
    }

    /// Projection of the full, untruncated text.
    pub fn encode(&self, text: &str) -> Vec<f32> {
        to_f32(self.project(&featurize(text, &self.featurizer)))
    }

    pub fn encode_query(&self, text: &str) -> Vec<f32> {
        to_f32(self.project(&self.featurize_query(text)))
    }

    pub fn encode_passage(&self, text: &str) -> Vec<f32> {
        to_f32(self.project(&self.featurize_passage(text)))
    }

    /// FNV-1a 64 over the little-endian bytes of the weights.
    pub fn checksum(&self) -> u64 {
        let bytes: Vec<u8> = self.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
        fnv1a64(&bytes)
    }
}

fn to_f32(v: Vec<f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

/// Produces the query-side vector for retrieval.
pub trait QueryEmbedder: Sync {
    fn dim(&self) -> usize;
    fn embed_query(&self, query: &Query) -> Result<Vec<f32>>;
}

impl QueryEmbedder for LinearEncoder {
    fn dim(&self) -> usize {
        self.out_dim
    }

    fn embed_query(&self, query: &Query) -> Result<Vec<f32>> {
        Ok(self.encode_query(&query.text))
    }
}

/// Precomputed query vectors keyed by query id (e.g. exported from an
/// external model).
impl QueryEmbedder for EmbeddingMatrix {
    fn dim(&self) -> usize {
        EmbeddingMatrix::dim(self)
    }

    fn embed_query(&self, query: &Query) -> Result<Vec<f32>> {
        self.row_by_id(&query.id)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| Error::MissingQueryEmbedding(query.id.clone()))
    }
}

/// Embeds every passage in corpus order, in parallel.
pub fn embed_corpus(encoder: &LinearEncoder, corpus: &Corpus) -> EmbeddingMatrix {
    let rows: Vec<Vec<f32>> = corpus
        .passages()
        .par_iter()
        .map(|p| encoder.encode_passage(&p.text))
        .collect();
    assemble(encoder, corpus, rows)
}

pub fn embed_corpus_serial(encoder: &LinearEncoder, corpus: &Corpus) -> EmbeddingMatrix {
    let rows: Vec<Vec<f32>> = corpus
        .passages()
        .iter()
        .map(|p| encoder.encode_passage(&p.text))
        .collect();
    assemble(encoder, corpus, rows)
}

fn assemble(encoder: &LinearEncoder, corpus: &Corpus, rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
    let ids = corpus.passages().iter().map(|p| p.id.clone()).collect();
    let values = rows.into_iter().flatten().collect();
    EmbeddingMatrix::new(corpus.id(), encoder.out_dim(), ids, values)
        .expect("corpus ids are unique and projections finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Passage;

    fn small() -> LinearEncoder {
        LinearEncoder::init(FeaturizerConfig::with_buckets(64), 8, 17).unwrap()
    }

    #[test]
    fn zero_features_give_zero_embedding() {
        let enc = small();
        assert!(enc.encode("").iter().all(|&x| x == 0.0));
        assert!(enc.encode(",,,").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_in_unnormalized_features() {
        let cfg = FeaturizerConfig {
            n_buckets: 64,
            normalize: false,
            ..Default::default()
        };
        let enc = LinearEncoder::init(cfg, 8, 5).unwrap();
        let x = enc.encode("red apple");
        let y = enc.encode("green pear");
        let xy = enc.encode("red apple green pear");
        for i in 0..8 {
            assert!((xy[i] - (x[i] + y[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = small();
        let b = small();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.encode("hello world"), b.encode("hello world"));
        let c = LinearEncoder::init(FeaturizerConfig::with_buckets(64), 8, 18).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn init_scale_matches_bucket_count() {
        let enc = LinearEncoder::init(FeaturizerConfig::with_buckets(4096), 16, 1).unwrap();
        let n = enc.weights().len() as f64;
        let var = enc.weights().iter().map(|&w| f64::from(w).powi(2)).sum::<f64>() / n;
        // Variance 1/sqrt(4096) = 1/64.
        assert!((var * 64.0 - 1.0).abs() < 0.05, "scaled variance {}", var * 64.0);
    }

    #[test]
    fn corpus_embedding_rows_follow_corpus_order() {
        let enc = small();
        let corpus = Corpus::new(
            "A",
            vec![
                Passage::new("x", "same text"),
                Passage::new("y", "other words"),
                Passage::new("z", "same text"),
            ],
        )
        .unwrap();
        let m = embed_corpus(&enc, &corpus);
        assert_eq!(m.len(), 3);
        assert_eq!(m.dim(), 8);
        assert_eq!(m.ids(), ["x", "y", "z"]);
        assert_eq!(m.row(0), m.row(2));
        assert_eq!(m.row(1), enc.encode_passage("other words").as_slice());
        assert_eq!(m, embed_corpus_serial(&enc, &corpus));
    }

    #[test]
    fn from_weights_checks_shape_and_finiteness() {
        let cfg = FeaturizerConfig::with_buckets(4);
        assert!(LinearEncoder::from_weights(cfg, 2, vec![0.0; 7], 0).is_err());
        let mut w = vec![0.0; 8];
        w[5] = f32::NAN;
        assert!(matches!(
            LinearEncoder::from_weights(cfg, 2, w, 0),
            Err(Error::NonFinite { row: 1, col: 1 })
        ));
    }
}
