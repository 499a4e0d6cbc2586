use std::collections::HashMap;
use std::sync::Arc;

use crate::bt::PreferencePair;
use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// Optional per-row annotations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowMeta {
    /// Where a front end can fetch the item for display.
    pub uri: Option<String>,
    /// Quality score for ranked datasets.
    pub score: Option<f64>,
}

/// Immutable set of same-dimension embeddings keyed by unique string ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    rows: Vec<Embedding>,
    meta: Vec<RowMeta>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, ids: Vec<String>, rows: Vec<Embedding>) -> Result<Self> {
        let meta = vec![RowMeta::default(); rows.len()];
        Self::with_meta(dim, ids, rows, meta)
    }

    pub fn with_meta(dim: usize, ids: Vec<String>, rows: Vec<Embedding>, meta: Vec<RowMeta>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("table dimension must be at least 1".into()));
        }
        if ids.len() != rows.len() || meta.len() != rows.len() {
            return Err(Error::Validation(format!(
                "{} ids, {} rows and {} metadata entries",
                ids.len(),
                rows.len(),
                meta.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, (id, row)) in ids.iter().zip(&rows).enumerate() {
            if row.dim() != dim {
                return Err(Error::Validation(format!(
                    "row '{id}' has dimension {}, table has {dim}",
                    row.dim()
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id '{id}'")));
            }
        }
        Ok(Self {
            dim,
            ids,
            rows,
            meta,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[Embedding] {
        &self.rows
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &Embedding {
        &self.rows[i]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.index_of(id).map(|i| &self.rows[i])
    }

    /// Index of `id`, or a validation error naming it.
    pub fn resolve(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::Validation(format!("unknown id '{id}'")))
    }
}

/// One preference `winner ≻ loser`, as row indices into a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedPair {
    pub winner: usize,
    pub loser: usize,
    pub query_id: Option<String>,
}

/// Preference pairs over a shared table.
#[derive(Debug, Clone)]
pub struct PreferenceDataset {
    table: Arc<EmbeddingTable>,
    pairs: Vec<IndexedPair>,
    /// Tie records skipped while loading.
    pub ties_dropped: usize,
}

impl PreferenceDataset {
    pub fn new(table: Arc<EmbeddingTable>, pairs: Vec<IndexedPair>) -> Result<Self> {
        for (i, p) in pairs.iter().enumerate() {
            if p.winner >= table.len() || p.loser >= table.len() {
                return Err(Error::Validation(format!(
                    "pair {i} references a row outside the table"
                )));
            }
            if p.winner == p.loser {
                return Err(Error::Validation(format!(
                    "pair {i} compares '{}' with itself",
                    table.id(p.winner)
                )));
            }
        }
        Ok(Self {
            table,
            pairs,
            ties_dropped: 0,
        })
    }

    /// Builds from `(winner_id, loser_id)` pairs.
    pub fn from_ids<S: AsRef<str>>(table: Arc<EmbeddingTable>, pairs: &[(S, S)]) -> Result<Self> {
        let pairs = pairs
            .iter()
            .map(|(w, l)| {
                Ok(IndexedPair {
                    winner: table.resolve(w.as_ref())?,
                    loser: table.resolve(l.as_ref())?,
                    query_id: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(table, pairs)
    }

    pub fn table(&self) -> &Arc<EmbeddingTable> {
        &self.table
    }

    pub fn pairs(&self) -> &[IndexedPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Borrowed embedding pairs for the math routines.
    pub fn preference_pairs(&self) -> Vec<PreferencePair<'_>> {
        self.pairs
            .iter()
            .map(|p| PreferencePair {
                winner: self.table.row(p.winner),
                loser: self.table.row(p.loser),
            })
            .collect()
    }

    pub fn winners(&self) -> Vec<&Embedding> {
        self.pairs.iter().map(|p| self.table.row(p.winner)).collect()
    }

    /// Dataset holding the pairs at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            table: Arc::clone(&self.table),
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            ties_dropped: 0,
        }
    }

    /// `(winner_id, loser_id)` view.
    pub fn id_pairs(&self) -> Vec<(&str, &str)> {
        self.pairs
            .iter()
            .map(|p| (self.table.id(p.winner), self.table.id(p.loser)))
            .collect()
    }
}
