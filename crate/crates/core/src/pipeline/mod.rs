//! End-to-end orchestration: annotation file in, scripts and reports out.
//!
//! Each stage reads and writes plain files in the output directory, so the
//! command-line tool can run them one at a time or all together.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::annotations::{associate_text_to_balloons, parse_book, AnnotationError, BookAnnotation};
use crate::clustering::{
    character_crops, cluster_characters, fetch_embeddings, load_vectors, ClusterAssignment, ClusterError,
    ClusterParams, EmbeddingCache, EmbeddingVector,
};
use crate::describe::{describe_script, named_speakers, DescribeError, DescribeOptions};
use crate::eval::{
    association_accuracy, cluster_confusion, description_similarities, render_text, text_type_confusion, EvalError,
    EvalReport, ReportMetadata, TextEmbedder,
};
use crate::llm::{Cassette, CassetteMode, HttpTransport, LlmClient, LlmError, OfflineTransport, Transport};
use crate::naming::{infer_names, render_transcript, NameMap, NamingError, NamingOptions, NamingOutcome};
use crate::script::{build_script, parse_markdown, rename_speakers, serialize_markdown, Script, ScriptError};
use crate::textrole::{block_roles, classify_page, RoleMap, RoleThresholds};
use crate::Real;

pub use config::PipelineConfig;

pub const ROLES_FILE: &str = "roles.json";
pub const ASSIGNMENT_FILE: &str = "assignment.json";
pub const SCRIPT_1_FILE: &str = "_script_1_.md";
pub const SCRIPT_2_FILE: &str = "_script_2_.md";
pub const SCRIPT_3_FILE: &str = "_script_3_.md";
pub const NAMES_FILE: &str = "names.json";
pub const TRANSCRIPT_FILE: &str = "naming_transcript.txt";
pub const OVERLAYS_DIR: &str = "overlays";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Validate,
    Classify,
    Cluster,
    Script,
    InferNames,
    Describe,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Validate,
        Stage::Classify,
        Stage::Cluster,
        Stage::Script,
        Stage::InferNames,
        Stage::Describe,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Classify => "classify",
            Stage::Cluster => "cluster",
            Stage::Script => "script",
            Stage::InferNames => "infer-names",
            Stage::Describe => "describe",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("annotations: {0}")]
    Annotation(#[from] AnnotationError),
    #[error("{path}: {detail}")]
    InvalidInput { path: PathBuf, detail: String },
    #[error("script: {0}")]
    Script(#[from] ScriptError),
    #[error("clustering: {0}")]
    Cluster(#[from] ClusterError),
    #[error("name inference: {0}")]
    Naming(#[from] NamingError),
    #[error("description: {0}")]
    Describe(#[from] DescribeError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Llm(#[from] LlmError),
    #[error("cannot write {path}: {detail}")]
    Io { path: PathBuf, detail: String },
}

impl PipelineError {
    /// The provider error behind this failure, if any.
    pub fn llm_error(&self) -> Option<&LlmError> {
        match self {
            PipelineError::Llm(e) | PipelineError::Naming(NamingError::Llm(e)) => Some(e),
            PipelineError::Cluster(ClusterError::Provider(e)) => Some(e),
            PipelineError::Eval(EvalError::Embedding(e)) => Some(e),
            PipelineError::Describe(d) => d.llm_error(),
            _ => None,
        }
    }

    /// Process exit code: 2 for invalid input, 3 for a cassette miss,
    /// 1 for any other failure.
    pub fn exit_code(&self) -> i32 {
        if self.llm_error().is_some_and(LlmError::is_cassette_miss) {
            return 3;
        }
        match self {
            PipelineError::Config(_)
            | PipelineError::Annotation(_)
            | PipelineError::InvalidInput { .. }
            | PipelineError::Script(_) => 2,
            PipelineError::Llm(LlmError::CassetteFile { .. }) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), detail: e.to_string() }
}

fn input_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::InvalidInput { path: path.to_path_buf(), detail: e.to_string() }
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| input_err(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_script(path: &Path) -> Result<Script, PipelineError> {
    parse_markdown(&read_text(path)?).map_err(|e| input_err(path, e))
}

pub fn write_script(path: &Path, script: &Script) -> Result<(), PipelineError> {
    write_bytes(path, serialize_markdown(script).as_bytes())
}

/// Parse and validate an annotation file, then link text blocks to their
/// balloons where the file does not already say.
pub fn load_book(path: &Path) -> Result<BookAnnotation, PipelineError> {
    let book = parse_book(&read_text(path)?)?;
    Ok(associate(book))
}

pub fn associate(mut book: BookAnnotation) -> BookAnnotation {
    book.pages = book.pages.iter().map(associate_text_to_balloons).collect();
    book
}

pub fn classify(book: &BookAnnotation, thresholds: &RoleThresholds) -> RoleMap {
    book.pages.iter().flat_map(|p| classify_page(p, thresholds)).collect()
}

pub fn cluster_with_vectors(
    book: &BookAnnotation,
    vectors: &BTreeMap<String, Vec<f32>>,
    params: &ClusterParams,
) -> Result<ClusterAssignment, PipelineError> {
    let vectors: Vec<EmbeddingVector> = vectors
        .iter()
        .map(|(id, v)| EmbeddingVector { instance_id: id.clone(), values: v.clone() })
        .collect();
    Ok(cluster_characters::<Real>(book, &vectors, params)?)
}

/// Embed character crops through the provider (served from `cache` when
/// possible) and cluster them.
pub fn cluster_with_provider(
    book: &BookAnnotation,
    images_dir: &Path,
    client: &LlmClient,
    cache: Option<&EmbeddingCache>,
    params: &ClusterParams,
    max_in_flight: usize,
) -> Result<ClusterAssignment, PipelineError> {
    let crops = character_crops(book, images_dir)?;
    let vectors = fetch_embeddings(&crops, client, cache, max_in_flight)?;
    Ok(cluster_characters::<Real>(book, &vectors, params)?)
}

pub fn build(book: &BookAnnotation, roles: &RoleMap, assignment: &ClusterAssignment) -> Result<Script, PipelineError> {
    Ok(build_script(book, roles, &assignment.speakers(book))?)
}

/// Named script, name map and transcript from the first script.
pub fn name_speakers(
    script: &Script,
    client: &LlmClient,
    options: &NamingOptions,
) -> Result<(Script, NamingOutcome), PipelineError> {
    let outcome = infer_names(script, client, options)?;
    Ok((rename_speakers(script, &outcome.names), outcome))
}

pub fn describe(
    book: &BookAnnotation,
    script: &Script,
    assignment: &ClusterAssignment,
    names: &NameMap,
    client: &LlmClient,
    options: &DescribeOptions,
) -> Result<Script, PipelineError> {
    let speakers = named_speakers(&assignment.speakers(book), names);
    Ok(describe_script(book, script, &speakers, client, options)?.0)
}

/// Compare predictions against whatever ground truth the annotation file
/// carries. A metric without ground truth is left out of the report.
pub fn evaluate(
    book: &BookAnnotation,
    roles: &RoleMap,
    assignment: &ClusterAssignment,
    described: Option<&Script>,
    embedder: Option<&dyn TextEmbedder>,
    max_in_flight: usize,
) -> Result<EvalReport, PipelineError> {
    let blocks: Vec<_> = book.pages.iter().flat_map(|p| &p.text_blocks).collect();
    let text = if blocks.iter().any(|b| b.role_gt.is_some()) {
        let mut gt = BTreeMap::new();
        for b in &blocks {
            let role = b.role_gt.ok_or_else(|| EvalError::MissingGroundTruth(b.id.clone()))?;
            gt.insert(b.id.clone(), role);
        }
        Some(text_type_confusion(&block_roles(roles), &gt)?)
    } else {
        None
    };

    let identities: BTreeMap<String, String> = book
        .characters()
        .filter_map(|(_, c)| c.reference_identity.clone().map(|r| (c.id.clone(), r)))
        .collect();
    let clusters = if identities.is_empty() {
        None
    } else {
        Some(cluster_confusion(&assignment.labels, &identities)?)
    };

    let association = match book.association_gt_map() {
        Some(gt) => {
            let pred: BTreeMap<String, String> =
                book.association_map().into_iter().filter(|(b, _)| gt.contains_key(b)).collect();
            Some(association_accuracy(&pred, &gt)?)
        }
        None => None,
    };

    let descriptions = match (described, embedder) {
        (Some(script), Some(embedder)) => {
            let mut pairs = Vec::new();
            for page in &book.pages {
                for panel in &page.panels {
                    let Some(gt) = &panel.description_gt else { continue };
                    let pred = script
                        .panel(page.index, panel.reading_order)
                        .and_then(|p| p.description.clone())
                        .ok_or_else(|| EvalError::EmptyText(format!("page {} panel {}", page.index, panel.reading_order)))?;
                    pairs.push((format!("page {} panel {}", page.index, panel.reading_order), pred, gt.clone()));
                }
            }
            if pairs.is_empty() {
                None
            } else {
                Some(description_similarities(&pairs, embedder, max_in_flight)?)
            }
        }
        _ => None,
    };

    Ok(EvalReport {
        metadata: ReportMetadata::default(),
        text,
        clusters,
        association_accuracy: association,
        descriptions,
    })
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), PipelineError> {
    write_json(&dir.join(REPORT_JSON_FILE), report)?;
    write_bytes(&dir.join(REPORT_TEXT_FILE), render_text(report).as_bytes())
}

/// The transport a configuration calls for: none at all in replay mode.
pub fn default_transport(cfg: &PipelineConfig) -> Arc<dyn Transport> {
    match cfg.cassette_mode {
        CassetteMode::Replay => Arc::new(OfflineTransport),
        _ => Arc::new(HttpTransport::new(cfg.api_key(), cfg.max_retries, Duration::from_secs(cfg.timeout_secs))),
    }
}

/// Client for `model`, recording to or replaying from `cassette`.
pub fn client(
    cfg: &PipelineConfig,
    model: &str,
    cassette: &Path,
    transport: Arc<dyn Transport>,
) -> Result<LlmClient, PipelineError> {
    let cassette = match cfg.cassette_mode {
        CassetteMode::Passthrough => Cassette::in_memory(CassetteMode::Passthrough),
        mode => Cassette::open(cassette, mode)?,
    };
    Ok(LlmClient::new(&cfg.endpoint, model, transport, Arc::new(cassette)).with_system(&cfg.system_prompt))
}

/// Files written by a pipeline run, in order.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub report: Option<EvalReport>,
}

/// Run every stage up to and including `stop_after`.
pub fn run(
    cfg: &PipelineConfig,
    transport: Arc<dyn Transport>,
    stop_after: Option<Stage>,
) -> Result<RunSummary, PipelineError> {
    let last = stop_after.unwrap_or(if cfg.eval { Stage::Eval } else { Stage::Describe });
    let thresholds = cfg.thresholds()?;
    let params = cfg.cluster_params()?;
    let out = &cfg.output;
    let mut summary = RunSummary::default();
    let emit = |path: PathBuf, summary: &mut RunSummary| {
        tracing::info!(path = %path.display(), "wrote");
        summary.written.push(path);
    };

    let book = load_book(&cfg.annotations)?;
    tracing::info!(book = %book.book_id, pages = book.pages.len(), "annotations valid");
    if last == Stage::Validate {
        return Ok(summary);
    }

    let roles = classify(&book, &thresholds);
    write_json(&out.join(ROLES_FILE), &roles)?;
    emit(out.join(ROLES_FILE), &mut summary);
    if last == Stage::Classify {
        return Ok(summary);
    }

    let assignment = match &cfg.vectors {
        Some(path) => cluster_with_vectors(&book, &load_vectors(path)?, &params)?,
        None => {
            let embedder = client(cfg, &cfg.embedding_model, &cfg.embedding_cassette, transport.clone())?;
            let cache = EmbeddingCache::new(out.join("cache").join("embeddings"));
            cluster_with_provider(&book, &cfg.images, &embedder, Some(&cache), &params, cfg.max_in_flight)?
        }
    };
    write_json(&out.join(ASSIGNMENT_FILE), &assignment)?;
    emit(out.join(ASSIGNMENT_FILE), &mut summary);
    if last == Stage::Cluster {
        return Ok(summary);
    }

    let script1 = build(&book, &roles, &assignment)?;
    write_script(&out.join(SCRIPT_1_FILE), &script1)?;
    emit(out.join(SCRIPT_1_FILE), &mut summary);
    if last == Stage::Script {
        return Ok(summary);
    }

    let namer = client(cfg, &cfg.model, &cfg.naming_cassette, transport.clone())?;
    let options = NamingOptions { use_first_name_only: cfg.use_first_name_only };
    let (script2, outcome) = name_speakers(&script1, &namer, &options)?;
    write_json(&out.join(NAMES_FILE), &outcome.names)?;
    write_bytes(&out.join(TRANSCRIPT_FILE), render_transcript(&outcome.transcript).as_bytes())?;
    write_script(&out.join(SCRIPT_2_FILE), &script2)?;
    for f in [NAMES_FILE, TRANSCRIPT_FILE, SCRIPT_2_FILE] {
        emit(out.join(f), &mut summary);
    }
    if last == Stage::InferNames {
        return Ok(summary);
    }

    let describer = client(cfg, &cfg.vision_model, &cfg.describe_cassette, transport.clone())?;
    let options = DescribeOptions {
        images_dir: cfg.images.clone(),
        overlays_dir: Some(out.join(OVERLAYS_DIR)),
        max_in_flight: cfg.max_in_flight,
    };
    let script3 = describe(&book, &script2, &assignment, &outcome.names, &describer, &options)?;
    write_script(&out.join(SCRIPT_3_FILE), &script3)?;
    emit(out.join(OVERLAYS_DIR), &mut summary);
    emit(out.join(SCRIPT_3_FILE), &mut summary);
    if last == Stage::Describe {
        return Ok(summary);
    }

    let has_description_gt = book.pages.iter().flat_map(|p| &p.panels).any(|p| p.description_gt.is_some());
    let embedder = if has_description_gt {
        Some(client(cfg, &cfg.text_embedding_model, &cfg.similarity_cassette, transport)?)
    } else {
        None
    };
    let report = evaluate(
        &book,
        &roles,
        &assignment,
        Some(&script3),
        embedder.as_ref().map(|c| c as &dyn TextEmbedder),
        cfg.max_in_flight,
    )?;
    write_report(out, &report)?;
    emit(out.join(REPORT_JSON_FILE), &mut summary);
    emit(out.join(REPORT_TEXT_FILE), &mut summary);
    summary.report = Some(report);
    Ok(summary)
}
