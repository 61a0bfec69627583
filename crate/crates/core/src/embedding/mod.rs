//! Hashed bag-of-words featurization, the shared linear encoder and the
//! on-disk embedding formats.

mod encoder;
mod format;
mod matrix;

pub use encoder::{embed_corpus, embed_corpus_serial, LinearEncoder, QueryEmbedder};
pub use format::{
    decode_embeddings, decode_encoder, encode_embeddings, encode_encoder, read_embeddings,
    read_encoder, write_embeddings, write_encoder, ENCODER_MAGIC, MDRE_MAGIC, MDRE_VERSION,
};
pub use matrix::EmbeddingMatrix;

use crate::error::{Error, Result};

/// Token limit applied to query text before featurization.
pub const QUERY_MAX_TOKENS: usize = 70;
/// Token limit applied to passage text before featurization.
pub const PASSAGE_MAX_TOKENS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturizerConfig {
    pub n_buckets: u32,
    pub lowercase: bool,
    /// L2-normalize the count vector. Always on outside of tests.
    pub normalize: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            n_buckets: 32768,
            lowercase: true,
            normalize: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn with_buckets(n_buckets: u32) -> Self {
        Self {
            n_buckets,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_buckets < 2 || !self.n_buckets.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "n_buckets must be a power of two >= 2, got {}",
                self.n_buckets
            )));
        }
        Ok(())
    }
}

/// Sparse feature vector: strictly increasing bucket indices with values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }
}

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Maximal runs of ASCII alphanumerics; everything else separates tokens.
pub fn tokenize(text: &str, lowercase: bool) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(move |t| {
            if lowercase {
                t.to_ascii_lowercase()
            } else {
                t.to_string()
            }
        })
}

pub fn bucket_of(token: &str, n_buckets: u32) -> u32 {
    (fnv1a64(token.as_bytes()) % u64::from(n_buckets)) as u32
}

/// Term counts over hashed buckets, L2-normalized when configured.
pub fn featurize(text: &str, config: &FeaturizerConfig) -> SparseVector {
    featurize_truncated(text, config, usize::MAX)
}

/// Like [`featurize`] but keeps only the first `max_tokens` tokens.
pub fn featurize_truncated(text: &str, config: &FeaturizerConfig, max_tokens: usize) -> SparseVector {
    let mut buckets: Vec<u32> = tokenize(text, config.lowercase)
        .take(max_tokens)
        .map(|t| bucket_of(&t, config.n_buckets))
        .collect();
    buckets.sort_unstable();

    let mut out = SparseVector::default();
    for b in buckets {
        if out.indices.last() == Some(&b) {
            *out.values.last_mut().unwrap() += 1.0;
        } else {
            out.indices.push(b);
            out.values.push(1.0);
        }
    }
    if config.normalize {
        let norm = out.norm();
        if norm > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}
