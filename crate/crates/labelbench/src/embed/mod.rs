//! Label embeddings and cosine-similarity aggregates.
//!
//! Providers are pluggable: a deterministic local hash embedder (default)
//! and an HTTP provider for real sentence-embedding models. Every vector
//! is L2-normalized on the way in and cached per (provider, text).

mod cache;
mod hash;
mod http;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EMBEDDING_MODEL: &str = "paraphrase-multilingual-MiniLM-L12-v2";

fn default_model() -> String {
    DEFAULT_EMBEDDING_MODEL.to_string()
}

fn default_dim() -> usize {
    256
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Fixed-dimension real vector representing a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scale to unit length. Errors on zero or non-finite norm.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        for v in &mut self.values {
            *v /= norm;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    HttpEmbeddings,
    HashEmbedder,
}

/// Declarative description of an embedding provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub kind: EmbeddingProviderKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl EmbeddingProviderSpec {
    pub fn hash_embedder(dim: usize) -> Self {
        Self {
            kind: EmbeddingProviderKind::HashEmbedder,
            endpoint: String::new(),
            model_name: default_model(),
            dim,
            cache_path: None,
            api_key_env: String::new(),
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn http_embeddings(endpoint: &str, model_name: &str) -> Self {
        Self {
            kind: EmbeddingProviderKind::HttpEmbeddings,
            endpoint: endpoint.to_string(),
            model_name: model_name.to_string(),
            ..Self::hash_embedder(default_dim())
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EmbeddingProviderKind::HashEmbedder => {
                if self.dim < 8 {
                    return Err(Error::InvalidConfig(format!(
                        "hash embedder dim must be >= 8, got {}",
                        self.dim
                    )));
                }
            }
            EmbeddingProviderKind::HttpEmbeddings => {
                if self.endpoint.is_empty() {
                    return Err(Error::InvalidConfig(
                        "http_embeddings provider needs an endpoint".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Cache identity: equal identities may share a cache file.
    pub fn identity(&self) -> String {
        match self.kind {
            EmbeddingProviderKind::HashEmbedder => format!("hash:{}", self.dim),
            EmbeddingProviderKind::HttpEmbeddings => format!("http:{}", self.model_name),
        }
    }
}

impl Default for EmbeddingProviderSpec {
    fn default() -> Self {
        Self::hash_embedder(default_dim())
    }
}

/// Embedding front-end with an in-memory cache and an optional file cache.
/// Concurrent readers share the map; writes are serialized by the mutex.
pub struct Embedder {
    spec: EmbeddingProviderSpec,
    memory: Mutex<HashMap<String, Arc<EmbeddingVector>>>,
    file: Mutex<Option<cache::FileCache>>,
    http: reqwest::blocking::Client,
}

impl Embedder {
    pub fn new(spec: EmbeddingProviderSpec) -> Result<Self> {
        spec.validate()?;
        let mut entries = HashMap::new();
        let file = match &spec.cache_path {
            Some(path) => {
                let (file, loaded) = cache::FileCache::open(path, &spec.identity())?;
                entries = loaded;
                Some(file)
            }
            None => None,
        };
        Ok(Self {
            spec,
            memory: Mutex::new(entries),
            file: Mutex::new(file),
            http: reqwest::blocking::Client::new(),
        })
    }

    pub fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    /// Embed a (normalized) label. Equal texts embed once; the returned
    /// vector has unit norm.
    pub fn embed(&self, text: &str) -> Result<Arc<EmbeddingVector>> {
        if text.is_empty() {
            return Err(Error::EmptyEmbedText);
        }
        if let Some(hit) = self.memory.lock().unwrap().get(text) {
            return Ok(Arc::clone(hit));
        }
        let raw = match self.spec.kind {
            EmbeddingProviderKind::HashEmbedder => hash::trigram_counts(text, self.spec.dim),
            EmbeddingProviderKind::HttpEmbeddings => {
                http::fetch_embedding(&self.http, &self.spec, text)?
            }
        };
        let vector = Arc::new(EmbeddingVector { values: raw }.normalized()?);
        let mut mem = self.memory.lock().unwrap();
        // another thread may have raced us here; keep the first entry so
        // every caller sees one identical vector per text
        let entry = mem
            .entry(text.to_string())
            .or_insert_with(|| Arc::clone(&vector));
        let stored = Arc::clone(entry);
        drop(mem);
        if Arc::ptr_eq(&stored, &vector) {
            if let Some(file) = self.file.lock().unwrap().as_mut() {
                file.append(text, &vector)?;
            }
        }
        Ok(stored)
    }
}

/// Cosine similarity, clamped into [-1, 1] against rounding. Bit-identical
/// vectors compare as exactly 1 so repeated labels aggregate to 1.0 exactly.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    if a.values == b.values {
        let norm = a.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        return Ok(1.0);
    }
    let norm_a = a.norm();
    let norm_b = b.norm();
    if norm_a <= 0.0 || norm_b <= 0.0 || !norm_a.is_finite() || !norm_b.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Mean cosine over all C(n, 2) unordered distinct-index pairs.
pub fn within_group_mean(labels: &[&str], embedder: &Embedder) -> Result<f64> {
    if labels.len() < 2 {
        return Err(Error::GroupTooSmall(labels.len()));
    }
    let vectors: Vec<Arc<EmbeddingVector>> = labels
        .iter()
        .map(|l| embedder.embed(l))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            sum += cosine(&vectors[i], &vectors[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Mean cosine over all |A| x |B| cross pairs.
pub fn cross_group_mean(group_a: &[&str], group_b: &[&str], embedder: &Embedder) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let vec_a: Vec<Arc<EmbeddingVector>> = group_a
        .iter()
        .map(|l| embedder.embed(l))
        .collect::<Result<_>>()?;
    let vec_b: Vec<Arc<EmbeddingVector>> = group_b
        .iter()
        .map(|l| embedder.embed(l))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for a in &vec_a {
        for b in &vec_b {
            sum += cosine(a, b)?;
        }
    }
    Ok(sum / (vec_a.len() * vec_b.len()) as f64)
}
