//! Text embeddings.
//!
//! The offline default is a signed feature-hashing embedder over lowercase
//! alphanumeric unigrams and adjacent bigrams. It needs no model weights and is
//! bit-reproducible in any language that has 64-bit wrapping multiplication:
//!
//! * bucket = FNV-1a-64(feature) mod d
//! * sign   = -1 if bit 63 of FNV-1a-64("s#" ++ feature) is set, else +1
//! * each occurrence adds its sign to its bucket; the sum is L2-normalized.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::normalize_text;
use crate::providers::{http_agent, probe_endpoint, ProbeStatus, ProviderError};

pub const DEFAULT_DIM: usize = 8192;
pub const MIN_DIM: usize = 8;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("all hashed features cancelled to a zero vector")]
    AllFeaturesCancelled,
    #[error("embedding dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedding: {0}")]
    Invalid(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProvider {
    #[default]
    Hashing,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub provider: EmbeddingProvider,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            provider: EmbeddingProvider::Hashing,
        }
    }
}

/// A unit-length vector. Construction always normalizes and rejects zero or
/// non-finite input, so every value of this type has norm 1 within f32 rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn from_components(components: Vec<f32>) -> Result<Self, EmbedError> {
        if components.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Invalid("non-finite component".into()));
        }
        let norm = components
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(EmbedError::AllFeaturesCancelled);
        }
        Ok(Self(
            components
                .into_iter()
                .map(|x| (f64::from(x) / norm) as f32)
                .collect(),
        ))
    }

    fn from_accumulator(acc: &[f64]) -> Result<Self, EmbedError> {
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::AllFeaturesCancelled);
        }
        Ok(Self(acc.iter().map(|x| (x / norm) as f32).collect()))
    }

    /// Wraps components that are already unit length, e.g. read back from an index file.
    pub(crate) fn from_raw_unchecked(components: Vec<f32>) -> Self {
        Self(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f32] {
        &self.0
    }

    /// Multiply every component by `factor` without renormalizing. Only useful
    /// for checking that ranking does not depend on query magnitude.
    pub fn scaled(&self, factor: f32) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        cosine(&self.0, &other.0)
    }
}

/// Cosine similarity accumulated in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += f64::from(x) * f64::from(y);
    }
    for &x in a {
        na += f64::from(x) * f64::from(x);
    }
    for &y in b {
        nb += f64::from(y) * f64::from(y);
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Unigrams followed by `_`-joined adjacent bigrams.
pub fn hashing_features(text: &str) -> Vec<String> {
    let words = words(text);
    let bigrams: Vec<String> = words
        .windows(2)
        .map(|pair| format!("{}_{}", pair[0], pair[1]))
        .collect();
    let mut features = words;
    features.extend(bigrams);
    features
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn probe(&self) -> ProbeStatus {
        ProbeStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_DIM {
            return Err(EmbedError::Invalid(format!("dimension {dim} is below {MIN_DIM}")));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing"
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dim];
        let mut salted = Vec::with_capacity(64);
        for feature in hashing_features(&text) {
            let bucket = (fnv1a64(feature.as_bytes()) % self.dim as u64) as usize;
            salted.clear();
            salted.extend_from_slice(b"s#");
            salted.extend_from_slice(feature.as_bytes());
            let sign = if fnv1a64(&salted) >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        EmbeddingVector::from_accumulator(&acc)
    }
}

/// Client for an embeddings endpoint: `POST {"text": ...}` answered by
/// `{"embedding": [f32, ...]}`. The response is L2-normalized locally.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        "http"
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let agent = http_agent(self.timeout);
        let mut req = agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(&EmbedRequest { text: &text })
            .map_err(ProviderError::from_transport)?;
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        EmbeddingVector::from_components(body.embedding)
    }

    fn probe(&self) -> ProbeStatus {
        probe_endpoint(&self.endpoint)
    }
}

/// Embed with whichever provider `embedder` is, rejecting empty input up front.
pub fn embed_text(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    embedder.embed(text)
}
