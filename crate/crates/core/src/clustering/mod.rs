//! Character re-identification: embeddings → reduction → HDBSCAN → speaker ids.

mod eigen;
mod embeddings;
mod hdbscan;
mod pca;
mod speakers;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::BookAnnotation;
use crate::llm::LlmError;
use crate::Scalar;

pub use embeddings::{
    character_crops, fetch_embeddings, load_vectors, vectors_for, Embedder, EmbeddingCache, EmbeddingVector,
};
pub use hdbscan::{core_distances, hdbscan};
pub use pca::Pca;
pub use speakers::{assign_speaker_ids, ClusterAssignment};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("zero variance: all embedding vectors are identical")]
    ZeroVariance,
    #[error("{found} points cannot be reduced to {target_dim} dimensions")]
    TooFewPoints { found: usize, target_dim: usize },
    #[error("vector for {instance} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        instance: String,
        expected: usize,
        found: usize,
    },
    #[error("vector for {0} contains a non-finite value")]
    NonFinite(String),
    #[error("no embedding vector for character {0}")]
    MissingVector(String),
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
    #[error("embedding provider: {0}")]
    Provider(#[from] LlmError),
    #[error("{0}")]
    Io(String),
}

/// Cluster label of one character instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Cluster(u32),
    Noise,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Cluster(k) => write!(f, "{k}"),
            Label::Noise => f.write_str("-1"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Label::Cluster(k) => s.serialize_i64(*k as i64),
            Label::Noise => s.serialize_i64(-1),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match i64::deserialize(d)? {
            -1 => Ok(Label::Noise),
            k if (0..=u32::MAX as i64).contains(&k) => Ok(Label::Cluster(k as u32)),
            k => Err(serde::de::Error::custom(format!("invalid cluster label {k}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Pca,
    /// Vectors are already reduced and are clustered as given.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub target_dim: usize,
    pub reducer: Reducer,
    pub normalize_embeddings: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 15,
            min_samples: None,
            target_dim: 5,
            reducer: Reducer::Pca,
            normalize_embeddings: true,
        }
    }
}

impl ClusterParams {
    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn check(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidParams("min_cluster_size must be at least 2".into()));
        }
        if self.min_samples() < 1 {
            return Err(ClusterError::InvalidParams("min_samples must be at least 1".into()));
        }
        if self.target_dim < 2 {
            return Err(ClusterError::InvalidParams("target_dim must be at least 2".into()));
        }
        Ok(())
    }
}

/// A character instance in reduced space.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPoint<T> {
    pub instance_id: String,
    pub coords: Vec<T>,
}

fn checked_rows<T: Scalar>(vectors: &[EmbeddingVector], normalize: bool) -> Result<Vec<Vec<T>>, ClusterError> {
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let dim = first.values.len();
    vectors
        .iter()
        .map(|v| {
            if v.values.len() != dim {
                return Err(ClusterError::DimensionMismatch {
                    instance: v.instance_id.clone(),
                    expected: dim,
                    found: v.values.len(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(ClusterError::NonFinite(v.instance_id.clone()));
            }
            let mut row: Vec<T> = v.values.iter().map(|x| T::from_f64_lossy(*x as f64)).collect();
            if normalize {
                let norm = row.iter().map(|x| *x * *x).sum::<T>().sqrt();
                if norm > T::zero() {
                    row.iter_mut().for_each(|x| *x = *x / norm);
                }
            }
            Ok(row)
        })
        .collect()
}

/// Project embeddings onto their top `target_dim` principal components.
pub fn reduce_pca<T: Scalar>(
    vectors: &[EmbeddingVector],
    target_dim: usize,
    normalize: bool,
) -> Result<Vec<ReducedPoint<T>>, ClusterError> {
    let rows = checked_rows::<T>(vectors, normalize)?;
    let pca = Pca::fit(&rows, target_dim)?;
    Ok(vectors
        .iter()
        .zip(&rows)
        .map(|(v, r)| ReducedPoint { instance_id: v.instance_id.clone(), coords: pca.transform(r) })
        .collect())
}

/// Cluster the book's characters from their embeddings and assign speaker
/// ids. `vectors` must cover every non-excluded character.
pub fn cluster_characters<T: Scalar>(
    book: &BookAnnotation,
    vectors: &[EmbeddingVector],
    params: &ClusterParams,
) -> Result<ClusterAssignment, ClusterError> {
    params.check()?;
    let ordered = vectors_for_book(book, vectors)?;
    let points: Vec<Vec<T>> = if ordered.len() < params.min_cluster_size {
        vec![Vec::new(); ordered.len()]
    } else {
        match params.reducer {
            Reducer::Pca => reduce_pca::<T>(&ordered, params.target_dim, params.normalize_embeddings)?
                .into_iter()
                .map(|p| p.coords)
                .collect(),
            Reducer::External => {
                let rows = checked_rows::<T>(&ordered, false)?;
                if let Some(r) = rows.first().filter(|r| r.len() != params.target_dim) {
                    return Err(ClusterError::DimensionMismatch {
                        instance: ordered[0].instance_id.clone(),
                        expected: params.target_dim,
                        found: r.len(),
                    });
                }
                rows
            }
        }
    };
    let labels = hdbscan(&points, params.min_cluster_size, params.min_samples());
    let by_id = ordered.iter().map(|v| v.instance_id.clone()).zip(labels).collect();
    Ok(assign_speaker_ids(&by_id, book))
}

fn vectors_for_book(book: &BookAnnotation, vectors: &[EmbeddingVector]) -> Result<Vec<EmbeddingVector>, ClusterError> {
    let map = vectors.iter().map(|v| (v.instance_id.clone(), v.values.clone())).collect();
    vectors_for(book, &map)
}
