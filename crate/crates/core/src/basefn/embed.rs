//! Embedding-similarity labeling: the provider interface, a deterministic
//! hash-based local provider, and cosine argmax classification.

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::BaseFnError;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("embedding is not unit-norm (|v| = {norm})")]
    NotUnitNorm { norm: f64 },
    #[error("embedding dimension {found}, expected {expected}")]
    WrongDim { expected: usize, found: usize },
}

/// Maps text to a unit-length vector of fixed dimension. Equal inputs must
/// produce identical vectors. Implementations must be safe for concurrent
/// `embed` calls.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Deterministic local provider: a seeded hash of the text expanded to `dim`
/// pseudo-random components, then L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    seed: u64,
    dim: usize,
}

impl HashEmbedding {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            dim: Self::DEFAULT_DIM,
        }
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be >= 1");
        Self { seed, dim }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let mut components = Vec::with_capacity(self.dim);
        let mut counter = 0u64;
        while components.len() < self.dim {
            let mut hasher = Sha256::new();
            hasher.update(self.seed.to_le_bytes());
            hasher.update(text.as_bytes());
            hasher.update(counter.to_le_bytes());
            let digest = hasher.finalize();
            for chunk in digest.chunks_exact(8) {
                if components.len() == self.dim {
                    break;
                }
                let raw = u64::from_le_bytes(chunk.try_into().unwrap());
                // map to [-1, 1)
                components.push(raw as f64 / (u64::MAX as f64 / 2.0) - 1.0);
            }
            counter += 1;
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // astronomically unlikely; fall back to a fixed basis vector
            components = vec![0.0; self.dim];
            components[0] = 1.0;
        } else {
            for c in &mut components {
                *c /= norm;
            }
        }
        Ok(components)
    }
}

/// Cosine of the angle between two vectors, in [-1, 1] up to rounding.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, BaseFnError> {
    if u.len() != v.len() {
        return Err(BaseFnError::VectorLen {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(BaseFnError::ZeroVector);
    }
    Ok(dot / (nu * nv))
}

/// Embeds the subject and every label, returning the argmax-cosine label and
/// the scores in input order. Ties break to the earliest label.
pub fn classify_label(
    provider: &dyn EmbeddingProvider,
    subject_text: &str,
    labels: &[String],
) -> Result<(String, Vec<f64>), BaseFnError> {
    if labels.is_empty() {
        return Err(BaseFnError::EmptyLabelSet);
    }
    for (n, label) in labels.iter().enumerate() {
        if labels[..n].contains(label) {
            return Err(BaseFnError::DuplicateLabel(label.clone()));
        }
    }

    let mut texts: Vec<&str> = Vec::with_capacity(labels.len() + 1);
    texts.push(subject_text);
    texts.extend(labels.iter().map(String::as_str));
    let vectors = provider.embed_batch(&texts)?;
    let subject = &vectors[0];

    let mut scores = Vec::with_capacity(labels.len());
    for vec in &vectors[1..] {
        scores.push(cosine_similarity(subject, vec)?);
    }
    let mut best = 0;
    for (n, &score) in scores.iter().enumerate() {
        if score > scores[best] {
            best = n;
        }
    }
    Ok((labels[best].clone(), scores))
}
