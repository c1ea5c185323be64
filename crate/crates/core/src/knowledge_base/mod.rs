//! The vector store: unit-norm embeddings, exact top-k cosine retrieval and
//! `.lhkb` persistence.
//!
//! Retrieval is a brute-force scan. Results are ordered by score descending
//! and then by ascending `chunk_id`, so every query has exactly one answer.

mod embedding;
mod persist;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_ingest::Chunk;

pub use embedding::{
    Embedder, EmbeddingClient, EmbeddingError, HashingEmbedder, OpenAiEmbeddingClient, ScriptedEmbedder,
};
pub use persist::{LoadError, FORMAT_VERSION};

/// Default number of chunks retrieved per query.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("chunk `{0}` is already in the store")]
    Duplicate(String),
    #[error("the knowledge base is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("embedding has a non-finite component")]
    NonFinite,
    #[error("embedding has no components")]
    EmptyVector,
    #[error("stored embedding has norm {0}, expected 1")]
    NotNormalized(f64),
}

/// A unit-length embedding. Components are rounded to 9 significant digits
/// on construction so that the stored decimal form reads back bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

fn quantize(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

impl EmbeddingVector {
    /// Scales `values` to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self, StoreError> {
        if values.is_empty() {
            return Err(StoreError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(StoreError::ZeroVector);
        }
        Ok(Self(values.into_iter().map(|v| quantize(v / norm)).collect()))
    }

    /// Accepts values that were already normalized and quantized, such as
    /// those read from a store file. The norm is checked to 1e-6.
    pub(crate) fn from_stored(values: Vec<f64>) -> Result<Self, StoreError> {
        if values.is_empty() {
            return Err(StoreError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(StoreError::NotNormalized(norm));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

/// Dot product of two unit vectors.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, StoreError> {
    if a.dimension() != b.dimension() {
        return Err(StoreError::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    Ok(dot(a.values(), b.values()))
}

/// Accumulates from +0.0, so orthogonal vectors score 0.0 and never -0.0.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoreRecord {
    pub chunk: Chunk,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

/// Ranking order: score descending, then chunk id ascending.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    dimension: Option<usize>,
    records: Vec<StoreRecord>,
    index: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store whose dimension is fixed before the first insert.
    pub fn with_dimension(dimension: usize) -> Self {
        Self {
            dimension: Some(dimension),
            ..Self::default()
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn get(&self, chunk_id: &str) -> Option<&StoreRecord> {
        self.index.get(chunk_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.index.contains_key(chunk_id)
    }

    pub fn insert(&mut self, record: StoreRecord) -> Result<(), StoreError> {
        let actual = record.embedding.dimension();
        if let Some(expected) = self.dimension.filter(|&d| d != actual) {
            return Err(StoreError::DimensionMismatch { expected, actual });
        }
        if self.index.contains_key(&record.chunk.chunk_id) {
            return Err(StoreError::Duplicate(record.chunk.chunk_id));
        }
        self.dimension = Some(actual);
        self.index.insert(record.chunk.chunk_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Embeds each chunk's LaTeX in batches of `batch_size` and inserts the
    /// records. Duplicate ids are rejected before any embedding call.
    pub fn add_chunks(
        &mut self,
        chunks: Vec<Chunk>,
        embedder: &Embedder,
        batch_size: usize,
    ) -> Result<usize, EmbeddingError> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = chunks
            .iter()
            .find(|c| self.contains(&c.chunk_id) || !seen.insert(c.chunk_id.as_str()))
        {
            return Err(StoreError::Duplicate(dup.chunk_id.clone()).into());
        }
        let added = chunks.len();
        let mut chunks = chunks.into_iter().peekable();
        while chunks.peek().is_some() {
            let batch: Vec<Chunk> = chunks.by_ref().take(batch_size.max(1)).collect();
            let texts: Vec<&str> = batch.iter().map(|c| c.latex.as_str()).collect();
            let vectors = embedder.embed_texts(&texts)?;
            for (chunk, embedding) in batch.into_iter().zip(vectors) {
                self.insert(StoreRecord { chunk, embedding })?;
            }
        }
        Ok(added)
    }

    /// The `min(k, len)` most similar chunks to `query`.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>, StoreError> {
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        let Some(expected) = self.dimension.filter(|_| !self.records.is_empty()) else {
            return Err(StoreError::EmptyStore);
        };
        if query.dimension() != expected {
            return Err(StoreError::DimensionMismatch {
                expected,
                actual: query.dimension(),
            });
        }
        let mut scored: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (dot(query.values(), r.embedding.values()), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            rank_order(
                a.0,
                &self.records[a.1].chunk.chunk_id,
                b.0,
                &self.records[b.1].chunk.chunk_id,
            )
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| ScoredChunk {
                chunk: self.records[i].chunk.clone(),
                score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_ingest::{ChunkKind, ChunkSource};

    pub(crate) fn chunk(id: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            source: ChunkSource {
                document_id: "doc".into(),
                pages: None,
            },
            kind: ChunkKind::Theory,
            latex: format!("text of {id}"),
            title: None,
        }
    }

    fn record(id: &str, v: Vec<f64>) -> StoreRecord {
        StoreRecord {
            chunk: chunk(id),
            embedding: EmbeddingVector::normalized(v).unwrap(),
        }
    }

    #[test]
    fn add_chunks_batches_and_rejects_duplicates() {
        let embedder = Embedder::new(Box::new(HashingEmbedder::new(16)), 1000);
        let mut kb = KnowledgeBase::new();
        let n = kb
            .add_chunks((0..5).map(|i| chunk(&format!("c{i}"))).collect(), &embedder, 2)
            .unwrap();
        assert_eq!(n, 5);
        assert_eq!(kb.len(), 5);
        assert_eq!(embedder.calls(), 3);
        let err = kb.add_chunks(vec![chunk("c9"), chunk("c1")], &embedder, 2).unwrap_err();
        assert!(matches!(err, EmbeddingError::Store(StoreError::Duplicate(id)) if id == "c1"));
        assert_eq!(embedder.calls(), 3);
        assert_eq!(kb.len(), 5);
    }

    #[test]
    fn normalization() {
        let v = EmbeddingVector::normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
        assert_eq!(EmbeddingVector::normalized(vec![0.0, 0.0]), Err(StoreError::ZeroVector));
        assert_eq!(EmbeddingVector::normalized(vec![f64::NAN]), Err(StoreError::NonFinite));
    }

    #[test]
    fn cosine_basics() {
        let a = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::normalized(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let c = EmbeddingVector::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            cosine_similarity(&a, &c),
            Err(StoreError::DimensionMismatch { expected: 2, actual: 3 })
        );
    }

    #[test]
    fn insert_and_conflicts() {
        let mut kb = KnowledgeBase::new();
        kb.insert(record("c1", vec![1.0, 0.0])).unwrap();
        assert_eq!(kb.len(), 1);
        assert_eq!(
            kb.insert(record("c1", vec![0.0, 1.0])),
            Err(StoreError::Duplicate("c1".into()))
        );
        assert_eq!(kb.len(), 1);
        assert!(matches!(
            kb.insert(record("c2", vec![1.0, 0.0, 0.0])),
            Err(StoreError::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn top_k_returns_min_k_n() {
        let mut kb = KnowledgeBase::new();
        kb.insert(record("only", vec![1.0, 2.0])).unwrap();
        let q = EmbeddingVector::normalized(vec![0.0, 1.0]).unwrap();
        assert_eq!(kb.top_k(&q, 5).unwrap().len(), 1);
        assert_eq!(kb.top_k(&q, 0), Err(StoreError::InvalidK));
        assert_eq!(KnowledgeBase::new().top_k(&q, 1), Err(StoreError::EmptyStore));
    }

    #[test]
    fn ties_break_by_chunk_id() {
        let mut kb = KnowledgeBase::new();
        kb.insert(record("b", vec![1.0, 1.0])).unwrap();
        kb.insert(record("a", vec![1.0, 1.0])).unwrap();
        let q = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let got = kb.top_k(&q, 1).unwrap();
        assert_eq!(got[0].chunk.chunk_id, "a");
        let both = kb.top_k(&q, 2).unwrap();
        assert_eq!(both[1].chunk.chunk_id, "b");
    }

    #[test]
    fn orthogonal_scores_tie_regardless_of_sign_of_zero() {
        let mut kb = KnowledgeBase::new();
        kb.insert(record("b", vec![0.0, 1.0])).unwrap();
        kb.insert(record("a", vec![0.0, -1.0])).unwrap();
        let q = EmbeddingVector::normalized(vec![-1.0, 0.0]).unwrap();
        let got = kb.top_k(&q, 2).unwrap();
        assert_eq!(got[0].score.to_bits(), 0.0f64.to_bits());
        assert_eq!(got[1].score.to_bits(), 0.0f64.to_bits());
        assert_eq!(got[0].chunk.chunk_id, "a");
    }
}
