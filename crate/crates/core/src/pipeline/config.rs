use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clustering::{ClusterParams, Reducer};
use crate::llm::CassetteMode;
use crate::textrole::RoleThresholds;

/// Pipeline settings, read from a flat TOML key/value file. Relative paths
/// are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub annotations: PathBuf,
    pub images: PathBuf,
    pub output: PathBuf,
    /// Precomputed `{instance_id: [floats]}` vectors; skips the embedding provider.
    pub vectors: Option<PathBuf>,

    pub min_height_ratio: f64,
    pub min_slope: f64,

    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub target_dim: usize,
    pub reducer: Reducer,
    pub normalize_embeddings: bool,

    pub endpoint: String,
    pub model: String,
    pub vision_model: String,
    pub embedding_model: String,
    pub text_embedding_model: String,
    pub api_key_env: String,
    pub system_prompt: String,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,

    pub cassette_mode: CassetteMode,
    pub naming_cassette: PathBuf,
    pub describe_cassette: PathBuf,
    pub embedding_cassette: PathBuf,
    pub similarity_cassette: PathBuf,

    pub use_first_name_only: bool,
    /// Run the evaluation stage at the end of the pipeline.
    pub eval: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cluster = ClusterParams::default();
        let thresholds = RoleThresholds::default();
        PipelineConfig {
            annotations: "annotations.json".into(),
            images: "images".into(),
            output: "out".into(),
            vectors: None,
            min_height_ratio: thresholds.min_height_ratio,
            min_slope: thresholds.min_slope,
            min_cluster_size: cluster.min_cluster_size,
            min_samples: cluster.min_samples,
            target_dim: cluster.target_dim,
            reducer: cluster.reducer,
            normalize_embeddings: cluster.normalize_embeddings,
            endpoint: "http://localhost:8000/v1".into(),
            model: "chat-model".into(),
            vision_model: "vision-model".into(),
            embedding_model: "image-embedding-model".into(),
            text_embedding_model: "text-embedding-model".into(),
            api_key_env: "COMICSCRIPT_API_KEY".into(),
            system_prompt: String::new(),
            max_retries: 3,
            max_in_flight: 4,
            timeout_secs: 120,
            cassette_mode: CassetteMode::Replay,
            naming_cassette: "cassettes/naming.jsonl".into(),
            describe_cassette: "cassettes/describe.jsonl".into(),
            embedding_cassette: "cassettes/embeddings.jsonl".into(),
            similarity_cassette: "cassettes/similarity.jsonl".into(),
            use_first_name_only: false,
            eval: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.annotations,
            &mut self.images,
            &mut self.output,
            &mut self.naming_cassette,
            &mut self.describe_cassette,
            &mut self.embedding_cassette,
            &mut self.similarity_cassette,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(v) = self.vectors.as_mut().filter(|v| v.is_relative()) {
            *v = base.join(&*v);
        }
    }

    pub fn thresholds(&self) -> Result<RoleThresholds, PipelineError> {
        RoleThresholds::new(self.min_height_ratio, self.min_slope).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn cluster_params(&self) -> Result<ClusterParams, PipelineError> {
        let p = ClusterParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            target_dim: self.target_dim,
            reducer: self.reducer,
            normalize_embeddings: self.normalize_embeddings,
        };
        p.check().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_resolve() {
        let mut cfg = PipelineConfig::from_toml(
            r#"
            annotations = "book.json"
            output = "/abs/out"
            min_cluster_size = 5
            cassette_mode = "record"
            reducer = "external"
            "#,
        )
        .unwrap();
        cfg.resolve_paths(Path::new("/cfg"));
        assert_eq!(cfg.annotations, Path::new("/cfg/book.json"));
        assert_eq!(cfg.output, Path::new("/abs/out"));
        assert_eq!(cfg.cassette_mode, CassetteMode::Record);
        assert_eq!(cfg.reducer, Reducer::External);
        assert_eq!(cfg.cluster_params().unwrap().min_samples(), 5);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(PipelineConfig::from_toml("colour = 3").is_err());
    }

    #[test]
    fn invalid_numbers_rejected() {
        let cfg = PipelineConfig { min_slope: 1.5, ..Default::default() };
        assert!(cfg.thresholds().is_err());
        let cfg = PipelineConfig { min_cluster_size: 1, ..Default::default() };
        assert!(cfg.cluster_params().is_err());
    }
}
