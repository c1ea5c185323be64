//! Embedding clients and the normalizing [`Embedder`] front end.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::{EmbeddingVector, StoreError};
use crate::llm_gateway::http::{http_client, post_json};
use crate::llm_gateway::TransportError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding service failed (retryable: {retryable}): {message}")]
    Client { retryable: bool, message: String },
    #[error("text to embed is empty")]
    EmptyText,
    #[error("text has {chars} characters, limit is {limit}")]
    TooLong { chars: usize, limit: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Client { retryable: true, .. })
    }
}

impl From<TransportError> for EmbeddingError {
    fn from(err: TransportError) -> Self {
        EmbeddingError::Client {
            retryable: err.is_transient(),
            message: err.to_string(),
        }
    }
}

/// A raw embedding backend. Returned vectors need not be normalized.
pub trait EmbeddingClient: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;

    fn model_name(&self) -> String;
}

/// Normalizes client output and enforces one dimension across calls.
pub struct Embedder {
    client: Box<dyn EmbeddingClient>,
    max_chars: usize,
    dimension: Mutex<Option<usize>>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("model", &self.client.model_name())
            .field("max_chars", &self.max_chars)
            .field("dimension", &self.dimension())
            .finish()
    }
}

impl Embedder {
    pub fn new(client: Box<dyn EmbeddingClient>, max_chars: usize) -> Self {
        Self {
            client,
            max_chars,
            dimension: Mutex::new(None),
            calls: AtomicUsize::new(0),
        }
    }

    /// Pins the expected dimension, e.g. to that of a loaded store.
    pub fn expect_dimension(self, dimension: Option<usize>) -> Self {
        *self.dimension.lock().expect("dimension lock") = dimension;
        self
    }

    pub fn dimension(&self) -> Option<usize> {
        *self.dimension.lock().expect("dimension lock")
    }

    pub fn model_name(&self) -> String {
        self.client.model_name()
    }

    /// Number of client requests made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut out = self.embed_texts(&[text])?;
        Ok(out.remove(0))
    }

    pub fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        for text in texts {
            if text.trim().is_empty() {
                return Err(EmbeddingError::EmptyText);
            }
            let chars = text.chars().count();
            if chars > self.max_chars {
                return Err(EmbeddingError::TooLong {
                    chars,
                    limit: self.max_chars,
                });
            }
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let raw = self.client.embed(texts)?;
        if raw.len() != texts.len() {
            return Err(EmbeddingError::Client {
                retryable: false,
                message: format!("asked for {} embeddings, got {}", texts.len(), raw.len()),
            });
        }
        let mut dimension = self.dimension.lock().expect("dimension lock");
        let mut out = Vec::with_capacity(raw.len());
        for values in raw {
            let actual = values.len();
            match *dimension {
                Some(expected) if expected != actual => {
                    return Err(StoreError::DimensionMismatch { expected, actual }.into())
                }
                _ => *dimension = Some(actual),
            }
            out.push(EmbeddingVector::normalized(values)?);
        }
        Ok(out)
    }
}

/// Returns scripted vectors in order, one per text.
#[derive(Debug)]
pub struct ScriptedEmbedder {
    vectors: Vec<Vec<f64>>,
    next: AtomicUsize,
}

impl ScriptedEmbedder {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        Self {
            vectors,
            next: AtomicUsize::new(0),
        }
    }
}

impl EmbeddingClient for ScriptedEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|_| {
                let i = self.next.fetch_add(1, Ordering::SeqCst);
                self.vectors.get(i).cloned().ok_or_else(|| EmbeddingError::Client {
                    retryable: false,
                    message: format!("embedding script exhausted at vector {}", i + 1),
                })
            })
            .collect()
    }

    fn model_name(&self) -> String {
        "scripted-embedder".into()
    }
}

/// Offline bag-of-tokens embedder: each token (a word or a LaTeX command)
/// is hashed with FNV-1a into a signed bucket.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension: dimension.max(1),
        }
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let lowered = text.to_lowercase();
        let mut tokens = tokens(&lowered).peekable();
        if tokens.peek().is_none() {
            // Symbol-only text still gets a deterministic nonzero vector.
            add(&mut v, fnv1a(lowered.trim().as_bytes()));
        }
        for token in tokens {
            add(&mut v, fnv1a(token.as_bytes()));
        }
        v
    }
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let start = rest.find(|c: char| c.is_alphanumeric() || c == '\\')?;
        let body = &rest[start..];
        let skip = usize::from(body.starts_with('\\'));
        let len = body[skip..]
            .find(|c: char| !c.is_alphanumeric())
            .map_or(body.len(), |n| n + skip);
        let (token, tail) = body.split_at(len.max(1));
        rest = tail;
        Some(token)
    })
    .filter(|t| *t != "\\")
}

fn add(v: &mut [f64], hash: u64) {
    let bucket = (hash % v.len() as u64) as usize;
    v[bucket] += if hash >> 63 == 0 { 1.0 } else { -1.0 };
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl EmbeddingClient for HashingEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }

    fn model_name(&self) -> String {
        format!("hashing-{}", self.dimension)
    }
}

/// Client for `{model, input}` → `{data: [{embedding, index}]}` services.
pub struct OpenAiEmbeddingClient {
    url: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for OpenAiEmbeddingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiEmbeddingClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl OpenAiEmbeddingClient {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key,
            http: http_client(Duration::from_secs(120)),
        }
    }

    pub fn request_body(&self, texts: &[&str]) -> Value {
        json!({ "model": self.model, "input": texts })
    }
}

pub(crate) fn parse_embedding_response(value: &Value, expected: usize) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    let malformed = |what: &str| EmbeddingError::Client {
        retryable: false,
        message: format!("malformed embedding response: {what}"),
    };
    let data = value["data"].as_array().ok_or_else(|| malformed("missing `data`"))?;
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item["index"].as_u64().map_or(pos, |i| i as usize);
        let values = item["embedding"]
            .as_array()
            .ok_or_else(|| malformed("missing `embedding`"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric component")))
            .collect::<Result<Vec<_>, _>>()?;
        let slot = out.get_mut(index).ok_or_else(|| malformed("index out of range"))?;
        *slot = Some(values);
    }
    out.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| malformed("missing embeddings for some inputs"))
}

impl EmbeddingClient for OpenAiEmbeddingClient {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let value = post_json(
            &self.http,
            &self.url,
            self.api_key.as_deref(),
            &self.request_body(texts),
        )?;
        parse_embedding_response(&value, texts.len())
    }

    fn model_name(&self) -> String {
        self.model.clone()
    }
}
