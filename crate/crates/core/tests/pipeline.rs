mod common;

use std::sync::Arc;

use comicscript::clustering::ClusterAssignment;
use comicscript::pipeline::{self, read_json, PipelineConfig, Stage};

#[test]
fn precomputed_vectors_match_recorded_embeddings() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = common::config(a.path());
    pipeline::run(&cfg, Arc::new(common::CountingTransport::default()), Some(Stage::Cluster)).unwrap();
    let mut with_vectors = common::config(b.path());
    with_vectors.vectors = Some(common::fixture("book/vectors.json"));
    pipeline::run(&with_vectors, Arc::new(common::CountingTransport::default()), Some(Stage::Cluster)).unwrap();
    let x: ClusterAssignment = read_json(&a.path().join(pipeline::ASSIGNMENT_FILE)).unwrap();
    let y: ClusterAssignment = read_json(&b.path().join(pipeline::ASSIGNMENT_FILE)).unwrap();
    assert_eq!(x, y);
    assert_eq!(x.cluster_count(), 4);
}

#[test]
fn stop_after_limits_outputs() {
    let out = tempfile::tempdir().unwrap();
    let summary =
        pipeline::run(&common::config(out.path()), Arc::new(common::CountingTransport::default()), Some(Stage::Classify))
            .unwrap();
    assert_eq!(summary.written, [out.path().join(pipeline::ROLES_FILE)]);
    assert!(!out.path().join(pipeline::ASSIGNMENT_FILE).exists());

    let summary =
        pipeline::run(&common::config(out.path()), Arc::new(common::CountingTransport::default()), Some(Stage::Validate))
            .unwrap();
    assert!(summary.written.is_empty());
}

#[test]
fn full_run_writes_every_artifact() {
    let out = tempfile::tempdir().unwrap();
    let (summary, calls) = common::replay_fixture(out.path());
    assert_eq!(calls, 0);
    let names: Vec<String> =
        summary.written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(
        names,
        [
            "roles.json",
            "assignment.json",
            "_script_1_.md",
            "names.json",
            "naming_transcript.txt",
            "_script_2_.md",
            "overlays",
            "_script_3_.md",
            "report.json",
            "report.txt"
        ]
    );
    let transcript = std::fs::read_to_string(out.path().join(pipeline::TRANSCRIPT_FILE)).unwrap();
    assert!(transcript.starts_with("USER:\nThis is the script of a comic book: \"\"\"# PAGE 11 - 7 PANELS:"));
    assert_eq!(transcript.matches("ASSISTANT:\n").count(), 4);
    assert_eq!(std::fs::read_dir(out.path().join(pipeline::OVERLAYS_DIR)).unwrap().count(), 45);
}

#[test]
fn unrecorded_request_is_a_cassette_miss() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(out.path());
    cfg.naming_cassette = out.path().join("empty.jsonl");
    std::fs::write(&cfg.naming_cassette, "").unwrap();
    let transport = Arc::new(common::CountingTransport::default());
    let err = pipeline::run(&cfg, transport.clone(), None).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert_eq!(transport.count(), 0);
    // Stages before naming completed.
    assert!(out.path().join(pipeline::SCRIPT_1_FILE).exists());
    assert!(!out.path().join(pipeline::SCRIPT_2_FILE).exists());
}

#[test]
fn missing_cassette_file_is_an_input_error() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(out.path());
    cfg.describe_cassette = out.path().join("absent.jsonl");
    let err = pipeline::run(&cfg, Arc::new(common::CountingTransport::default()), None).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn changed_threshold_misses_the_cassette() {
    // A different script means a different naming request.
    let out = tempfile::tempdir().unwrap();
    let mut cfg = common::config(out.path());
    cfg.min_height_ratio = 0.01;
    let err = pipeline::run(&cfg, Arc::new(common::CountingTransport::default()), None).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn config_paths_resolve_against_its_directory() {
    let cfg = PipelineConfig::load(&common::fixture("book/pipeline.toml")).unwrap();
    assert_eq!(cfg.annotations, common::fixture("book/book.json"));
    assert_eq!(cfg.naming_cassette, common::fixture("book/cassettes/naming.jsonl"));
    assert!(cfg.use_first_name_only);
    assert_eq!(cfg.min_cluster_size, 5);
}

#[test]
fn bad_config_rejected() {
    assert!(PipelineConfig::from_toml("annotation = \"x\"").is_err());
    let cfg = PipelineConfig::from_toml("min_slope = 2.0").unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig { output: out.path().to_path_buf(), ..cfg };
    cfg.annotations = common::fixture("book/book.json");
    let err = pipeline::run(&cfg, Arc::new(common::CountingTransport::default()), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
