use std::collections::HashMap;

use serde::Deserialize;
use thiserror::Error;

use super::{MetricError, TokenSequence};

/// Weight of the lexical-divergence bonus.
pub const DEFAULT_OMEGA: f64 = 0.05;
/// Normalized edit distance at which the divergence bonus saturates.
pub const DEFAULT_DS_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("similarity backend failed: {0}")]
    Failed(String),
}

/// Semantic similarity in `[0, 1]` between two token sequences.
pub trait SimilarityBackend: Send + Sync {
    fn name(&self) -> &str;
    fn similarity(&self, a: &TokenSequence, b: &TokenSequence) -> Result<f64, BackendError>;
}

/// Cosine similarity of token count vectors. Never fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct BagOfWordsCosine;

impl SimilarityBackend for BagOfWordsCosine {
    fn name(&self) -> &str {
        "bow-cosine"
    }

    fn similarity(&self, a: &TokenSequence, b: &TokenSequence) -> Result<f64, BackendError> {
        fn count(s: &TokenSequence) -> HashMap<&str, f64> {
            let mut m: HashMap<&str, f64> = HashMap::new();
            for t in s.tokens() {
                *m.entry(t.as_str()).or_default() += 1.0;
            }
            m
        }
        let (ca, cb) = (count(a), count(b));
        let dot: f64 = ca.iter().filter_map(|(t, x)| cb.get(t).map(|y| x * y)).sum();
        let na = ca.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = cb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(0.0, 1.0))
    }
}

/// Tries `primary` and falls back to `fallback` when it errors.
pub struct WithFallback<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: SimilarityBackend, F: SimilarityBackend> SimilarityBackend for WithFallback<P, F> {
    fn name(&self) -> &str {
        self.primary.name()
    }

    fn similarity(&self, a: &TokenSequence, b: &TokenSequence) -> Result<f64, BackendError> {
        self.primary.similarity(a, b).or_else(|e| {
            log::warn!("{e}; using {}", self.fallback.name());
            self.fallback.similarity(a, b)
        })
    }
}

/// Cosine similarity of vectors returned by an embedding HTTP endpoint.
///
/// Request: `POST {url}` with `{"model": ..., "input": [text_a, text_b]}`.
/// Response: `{"embeddings": [[...], [...]]}`.
pub struct EmbeddingApiBackend {
    url: String,
    model: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embeddings: Vec<Vec<f64>>,
}

impl EmbeddingApiBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>, key: Option<String>) -> Self {
        Self { url: url.into(), model: model.into(), key, client: reqwest::blocking::Client::new() }
    }
}

impl SimilarityBackend for EmbeddingApiBackend {
    fn name(&self) -> &str {
        &self.model
    }

    fn similarity(&self, a: &TokenSequence, b: &TokenSequence) -> Result<f64, BackendError> {
        let body = serde_json::json!({
            "model": self.model,
            "input": [a.tokens().join(" "), b.tokens().join(" ")],
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Failed(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BackendError::Failed(format!("HTTP {}", resp.status())));
        }
        let parsed: EmbeddingResponse = resp.json().map_err(|e| BackendError::Failed(e.to_string()))?;
        let [ea, eb]: [Vec<f64>; 2] = parsed
            .embeddings
            .try_into()
            .map_err(|_| BackendError::Failed("expected two embeddings".into()))?;
        if ea.len() != eb.len() || ea.is_empty() {
            return Err(BackendError::Failed("embedding dimensions differ".into()));
        }
        let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
        let na = ea.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = eb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(0.0, 1.0))
    }
}

fn token_edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Bounded lexical divergence in `[0, 1]`: normalized token edit distance,
/// saturating at `threshold`.
pub fn lexical_divergence(source: &TokenSequence, candidate: &TokenSequence, threshold: f64) -> f64 {
    let longest = source.len().max(candidate.len());
    if longest == 0 {
        return 0.0;
    }
    let ned = token_edit_distance(source.tokens(), candidate.tokens()) as f64 / longest as f64;
    ned.min(threshold) / threshold
}

/// `clamp(sim(candidate, reference) + omega * DS(source, candidate), 0, 1)`;
/// the divergence term is zero when there is no source text.
pub fn parascore(
    source: Option<&TokenSequence>,
    candidate: &TokenSequence,
    reference: &TokenSequence,
    backend: &dyn SimilarityBackend,
    omega: f64,
) -> Result<f64, ParaScoreError> {
    if reference.is_empty() {
        return Err(ParaScoreError::Metric(MetricError::EmptyReference));
    }
    let sim = backend.similarity(candidate, reference)?;
    let ds = source.map_or(0.0, |s| lexical_divergence(s, candidate, DEFAULT_DS_THRESHOLD));
    Ok((sim + omega * ds).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParaScoreError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
