//! Text embedders.
//!
//! The default [`HashEmbedder`] maps each token to a signed bucket with a
//! seeded FNV-1a hash, sums, and L2-normalizes. Text with no tokens maps to
//! the unit basis vector `e0`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::retriever::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding response invalid: {0}")]
    Response(String),
}

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// L2-normalize `values`. A zero vector becomes `e0`.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            values.iter_mut().for_each(|v| *v = 0.0);
            if let Some(first) = values.first_mut() {
                *first = 1.0;
            }
        } else {
            values.iter_mut().for_each(|v| *v = (f64::from(*v) / norm) as f32);
        }
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }

    /// Both vectors are unit norm, so this is the dot product.
    pub fn cosine(&self, other: &Self) -> f64 {
        self.dot(other)
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 512, seed: 0 }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche so low bits depend on every input byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

impl HashEmbedder {
    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0f32; self.dim.max(1)];
        for token in tokenize(text) {
            let h = fnv1a(self.seed, token.as_bytes());
            let bucket = (h % v.len() as u64) as usize;
            let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        EmbeddingVector::normalized(v)
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Posts `{"texts": [...]}` to a URL and expects `{"vectors": [[...], ...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::Transport(format!("HTTP {}", resp.status())));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| EmbedError::Response(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Response(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        let dim = body.vectors.first().map_or(0, Vec::len);
        if body.vectors.iter().any(|v| v.len() != dim || v.is_empty()) {
            return Err(EmbedError::Response("inconsistent vector dimensions".into()));
        }
        Ok(body.vectors.into_iter().map(EmbeddingVector::normalized).collect())
    }
}
