use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::llm::{LlmClient, LlmError};
use crate::parallel::bounded_map;
use crate::Scalar;

/// Text embedding provider.
pub trait TextEmbedder: Sync {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, LlmError>;
}

impl TextEmbedder for LlmClient {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, LlmError> {
        LlmClient::embed_text(self, text)
    }
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let dot: T = a.iter().zip(b).map(|(x, y)| *x * *y).sum();
    let na = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let nb = b.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        return Err(EvalError::ZeroVector);
    }
    Ok((dot / (na * nb)).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub panel: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub scores: Vec<SimilarityScore>,
    pub mean: Option<f64>,
}

fn similarity(pred: &str, gt: &str, embedder: &dyn TextEmbedder) -> Result<f64, EvalError> {
    let a = embedder.embed_text(pred).map_err(EvalError::Embedding)?;
    let b = embedder.embed_text(gt).map_err(EvalError::Embedding)?;
    let a: Vec<f64> = a.into_iter().map(f64::from).collect();
    let b: Vec<f64> = b.into_iter().map(f64::from).collect();
    cosine_similarity(&a, &b)
}

/// Cosine similarity of each `(panel, predicted, reference)` description
/// pair, plus their mean.
pub fn description_similarities(
    pairs: &[(String, String, String)],
    embedder: &dyn TextEmbedder,
    max_in_flight: usize,
) -> Result<SimilarityReport, EvalError> {
    for (panel, pred, gt) in pairs {
        if pred.trim().is_empty() || gt.trim().is_empty() {
            return Err(EvalError::EmptyText(panel.clone()));
        }
    }
    let results = bounded_map(pairs, max_in_flight, |(panel, pred, gt)| {
        similarity(pred, gt, embedder).map(|score| SimilarityScore { panel: panel.clone(), score })
    });
    let scores: Vec<SimilarityScore> = results.into_iter().collect::<Result<_, _>>()?;
    let mean = (!scores.is_empty()).then(|| scores.iter().map(|s| s.score).sum::<f64>() / scores.len() as f64);
    Ok(SimilarityReport { scores, mean })
}
