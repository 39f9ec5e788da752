use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ClusterError;
use crate::annotations::BookAnnotation;
use crate::imaging;
use crate::llm::LlmError;
use crate::parallel::bounded_map;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub instance_id: String,
    pub values: Vec<f32>,
}

/// Image embedding provider.
pub trait Embedder: Sync {
    fn model_id(&self) -> &str;
    fn embed_image(&self, png: &[u8]) -> Result<Vec<f32>, LlmError>;
}

/// On-disk vector cache keyed by the hash of model id and image bytes.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EmbeddingCache { dir: dir.into() }
    }

    pub fn key(model_id: &str, png: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(model_id.as_bytes());
        h.update([0u8]);
        h.update(png);
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Vec<f32>> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, values: &[f32]) -> Result<(), ClusterError> {
        fs::create_dir_all(&self.dir).map_err(|e| ClusterError::Io(format!("{}: {e}", self.dir.display())))?;
        let text = serde_json::to_string(values).expect("floats serialize");
        let path = self.path(key);
        fs::write(&path, text).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))
    }
}

/// Read a precomputed vectors file: `{instance_id: [floats]}`.
pub fn load_vectors(path: &Path) -> Result<BTreeMap<String, Vec<f32>>, ClusterError> {
    let text = fs::read_to_string(path).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))
}

/// Vectors of the book's non-excluded characters, in reading order.
pub fn vectors_for(
    book: &BookAnnotation,
    vectors: &BTreeMap<String, Vec<f32>>,
) -> Result<Vec<EmbeddingVector>, ClusterError> {
    book.characters_in_reading_order()
        .into_iter()
        .filter(|c| !c.excluded)
        .map(|c| {
            vectors
                .get(&c.id)
                .map(|v| EmbeddingVector { instance_id: c.id.clone(), values: v.clone() })
                .ok_or_else(|| ClusterError::MissingVector(c.id.clone()))
        })
        .collect()
}

/// PNG crops of every non-excluded character body, in reading order.
pub fn character_crops(book: &BookAnnotation, images_dir: &Path) -> Result<Vec<(String, Vec<u8>)>, ClusterError> {
    let mut out = Vec::new();
    for page in &book.pages {
        let wanted: Vec<_> = page.characters.iter().filter(|c| !c.excluded).collect();
        if wanted.is_empty() {
            continue;
        }
        let img = imaging::load_page(images_dir, page.index).map_err(|e| ClusterError::Io(e.to_string()))?;
        for c in wanted {
            let crop = imaging::crop(&img, &c.body_bbox)
                .and_then(|c| imaging::encode_png(&c))
                .map_err(|e| ClusterError::Io(format!("{}: {e}", c.id)))?;
            out.push((c.id.clone(), crop));
        }
    }
    let order: BTreeMap<&str, usize> = book
        .characters_in_reading_order()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    out.sort_by_key(|(id, _)| order[id.as_str()]);
    Ok(out)
}

/// Embed each crop, serving repeats from `cache`. Results are in input order.
pub fn fetch_embeddings(
    crops: &[(String, Vec<u8>)],
    embedder: &dyn Embedder,
    cache: Option<&EmbeddingCache>,
    max_in_flight: usize,
) -> Result<Vec<EmbeddingVector>, ClusterError> {
    let results = bounded_map(crops, max_in_flight, |(id, png)| -> Result<EmbeddingVector, ClusterError> {
        let key = EmbeddingCache::key(embedder.model_id(), png);
        if let Some(values) = cache.and_then(|c| c.get(&key)) {
            return Ok(EmbeddingVector { instance_id: id.clone(), values });
        }
        let values = embedder.embed_image(png)?;
        if let Some(c) = cache {
            c.put(&key, &values)?;
        }
        Ok(EmbeddingVector { instance_id: id.clone(), values })
    });
    let vectors: Vec<EmbeddingVector> = results.into_iter().collect::<Result<_, _>>()?;
    if let Some(first) = vectors.first() {
        let dim = first.values.len();
        if let Some(bad) = vectors.iter().find(|v| v.values.len() != dim) {
            return Err(ClusterError::DimensionMismatch {
                instance: bad.instance_id.clone(),
                expected: dim,
                found: bad.values.len(),
            });
        }
    }
    Ok(vectors)
}
