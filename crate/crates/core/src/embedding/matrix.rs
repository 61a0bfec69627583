use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense row-major vectors for one corpus, aligned to passage ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    corpus_id: String,
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(
        corpus_id: impl Into<String>,
        dim: usize,
        ids: Vec<String>,
        values: Vec<f32>,
    ) -> Result<Self> {
        if values.len() != ids.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} ids x {dim} dims needs {} values, got {}",
                ids.len(),
                ids.len() * dim,
                values.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i / dim.max(1),
                col: i % dim.max(1),
            });
        }
        Ok(Self {
            corpus_id: corpus_id.into(),
            dim,
            ids,
            values,
            index,
        })
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    /// Stacks several matrices into one, keeping row order. Ids must stay unique.
    pub fn concat(corpus_id: &str, parts: &[&EmbeddingMatrix]) -> Result<Self> {
        let dim = parts.first().map_or(0, |m| m.dim);
        if parts.iter().any(|m| m.dim != dim) {
            return Err(Error::ShapeMismatch("matrices differ in dimension".into()));
        }
        let ids = parts.iter().flat_map(|m| m.ids.iter().cloned()).collect();
        let values = parts.iter().flat_map(|m| m.values.iter().copied()).collect();
        Self::new(corpus_id, dim, ids, values)
    }
}
