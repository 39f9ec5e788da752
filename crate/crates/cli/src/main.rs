use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use comicscript::clustering::{load_vectors, EmbeddingCache, Reducer};
use comicscript::describe::DescribeOptions;
use comicscript::eval::TextEmbedder;
use comicscript::llm::CassetteMode;
use comicscript::naming::{render_transcript, NameMap, NamingOptions};
use comicscript::pipeline::{self, PipelineConfig, PipelineError, Stage};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "comicscript", version, about = "Compile comic-page annotations into an accessibility script")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an annotation file against the schema and its invariants.
    Validate { annotations: PathBuf },
    /// Classify text as sound effect, dialogue or caption.
    Classify {
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Cluster character instances into speaker ids.
    Cluster {
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Precomputed `{instance_id: [floats]}` vectors; no provider is used.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Page images, needed when embedding through the provider.
        #[arg(long)]
        images: Option<PathBuf>,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Build the first script from annotations, roles and speaker ids.
    Script {
        annotations: PathBuf,
        #[arg(long)]
        roles: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer character names and write the named script.
    InferNames {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        first_name_only: bool,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Describe every panel and write the final script.
    Describe {
        annotations: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        names: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Score predictions against the ground truth in an annotation file.
    Eval {
        /// Annotation file carrying the ground truth.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        roles: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        /// Described script, for description similarity.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Writes `report.json` here and `report.txt` beside it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run all stages from a TOML configuration.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stop_after: Option<Stage>,
        /// Call the provider on cassette misses and record the replies.
        #[arg(long)]
        record: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        min_height_ratio: Option<f64>,
        #[arg(long)]
        min_slope: Option<f64>,
        #[arg(long)]
        min_cluster_size: Option<usize>,
    },
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 0.025)]
    min_height_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    min_slope: f64,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, default_value_t = 15)]
    min_cluster_size: usize,
    #[arg(long)]
    min_samples: Option<usize>,
    #[arg(long, default_value_t = 5)]
    target_dim: usize,
    /// Vectors are already reduced.
    #[arg(long)]
    external_reducer: bool,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct ProviderArgs {
    /// Cassette file serving provider replies.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Call the provider on cassette misses and record the replies.
    #[arg(long)]
    record: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

impl ProviderArgs {
    fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        if self.record {
            cfg.cassette_mode = CassetteMode::Record;
        }
        if let Some(e) = &self.endpoint {
            cfg.endpoint = e.clone();
        }
        if let Some(k) = &self.api_key_env {
            cfg.api_key_env = k.clone();
        }
        cfg.max_in_flight = self.max_in_flight;
        cfg
    }

    fn client(&self, default_model: impl Fn(&PipelineConfig) -> String) -> Result<comicscript::llm::LlmClient, PipelineError> {
        let cfg = self.config();
        let cassette = self
            .cassette
            .as_ref()
            .ok_or_else(|| PipelineError::Config("--cassette is required for provider calls".into()))?;
        let model = self.model.clone().unwrap_or_else(|| default_model(&cfg));
        pipeline::client(&cfg, &model, cassette, pipeline::default_transport(&cfg))
    }
}

fn thresholds(args: &ThresholdArgs) -> Result<comicscript::RoleThresholds, PipelineError> {
    comicscript::RoleThresholds::new(args.min_height_ratio, args.min_slope).map_err(|e| PipelineError::Config(e.to_string()))
}

fn cluster_params(args: &ClusterArgs) -> Result<comicscript::clustering::ClusterParams, PipelineError> {
    let params = comicscript::clustering::ClusterParams {
        min_cluster_size: args.min_cluster_size,
        min_samples: args.min_samples,
        target_dim: args.target_dim,
        reducer: if args.external_reducer { Reducer::External } else { Reducer::Pca },
        normalize_embeddings: !args.no_normalize,
    };
    params.check().map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(params)
}

fn report_sibling(out: &Path, name: &str) -> PathBuf {
    out.parent().unwrap_or(Path::new("")).join(name)
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Validate { annotations } => {
            let book = pipeline::load_book(&annotations)?;
            println!(
                "{}: {} pages, {} panels, {} text blocks: valid",
                book.book_id,
                book.pages.len(),
                book.panel_count(),
                book.text_block_count()
            );
        }
        Command::Classify { annotations, out, thresholds: t } => {
            let book = pipeline::load_book(&annotations)?;
            pipeline::write_json(&out, &pipeline::classify(&book, &thresholds(&t)?))?;
        }
        Command::Cluster { annotations, out, vectors, images, cluster, provider } => {
            let book = pipeline::load_book(&annotations)?;
            let params = cluster_params(&cluster)?;
            let assignment = match (vectors, images) {
                (Some(v), _) => pipeline::cluster_with_vectors(&book, &load_vectors(&v)?, &params)?,
                (None, Some(images)) => {
                    let client = provider.client(|c| c.embedding_model.clone())?;
                    let cache = EmbeddingCache::new(report_sibling(&out, "cache").join("embeddings"));
                    pipeline::cluster_with_provider(&book, &images, &client, Some(&cache), &params, provider.max_in_flight)?
                }
                (None, None) => return Err(PipelineError::Config("either --vectors or --images is required".into())),
            };
            pipeline::write_json(&out, &assignment)?;
            println!("{} clusters", assignment.cluster_count());
        }
        Command::Script { annotations, roles, assignment, out } => {
            let book = pipeline::load_book(&annotations)?;
            let script = pipeline::build(&book, &pipeline::read_json(&roles)?, &pipeline::read_json(&assignment)?)?;
            pipeline::write_script(&out, &script)?;
        }
        Command::InferNames { script, out_dir, first_name_only, provider } => {
            let script = pipeline::read_script(&script)?;
            let client = provider.client(|c| c.model.clone())?;
            let options = NamingOptions { use_first_name_only: first_name_only };
            let (named, outcome) = pipeline::name_speakers(&script, &client, &options)?;
            pipeline::write_json(&out_dir.join(pipeline::NAMES_FILE), &outcome.names)?;
            pipeline::write_bytes(
                &out_dir.join(pipeline::TRANSCRIPT_FILE),
                render_transcript(&outcome.transcript).as_bytes(),
            )?;
            pipeline::write_script(&out_dir.join(pipeline::SCRIPT_2_FILE), &named)?;
            for d in &outcome.names.diagnostics {
                eprintln!("warning: {d}");
            }
        }
        Command::Describe { annotations, script, assignment, names, images, out_dir, provider } => {
            let book = pipeline::load_book(&annotations)?;
            let script = pipeline::read_script(&script)?;
            let assignment = pipeline::read_json(&assignment)?;
            let names: NameMap = pipeline::read_json(&names)?;
            let client = provider.client(|c| c.vision_model.clone())?;
            let options = DescribeOptions {
                images_dir: images,
                overlays_dir: Some(out_dir.join(pipeline::OVERLAYS_DIR)),
                max_in_flight: provider.max_in_flight,
            };
            let described = pipeline::describe(&book, &script, &assignment, &names, &client, &options)?;
            pipeline::write_script(&out_dir.join(pipeline::SCRIPT_3_FILE), &described)?;
        }
        Command::Eval { gt, roles, assignment, script, out, provider } => {
            let book = pipeline::load_book(&gt)?;
            let described = script.as_deref().map(pipeline::read_script).transpose()?;
            let client = match (&described, &provider.cassette) {
                (Some(_), Some(_)) => Some(provider.client(|c| c.text_embedding_model.clone())?),
                _ => None,
            };
            let report = pipeline::evaluate(
                &book,
                &pipeline::read_json(&roles)?,
                &pipeline::read_json(&assignment)?,
                described.as_ref(),
                client.as_ref().map(|c| c as &dyn TextEmbedder),
                provider.max_in_flight,
            )?;
            pipeline::write_json(&out, &report)?;
            let text = comicscript::eval::render_text(&report);
            pipeline::write_bytes(&report_sibling(&out, pipeline::REPORT_TEXT_FILE), text.as_bytes())?;
            print!("{text}");
        }
        Command::Pipeline { config, stop_after, record, output, vectors, model, min_height_ratio, min_slope, min_cluster_size } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if record {
                cfg.cassette_mode = CassetteMode::Record;
            }
            if let Some(o) = output {
                cfg.output = o;
            }
            if let Some(v) = vectors {
                cfg.vectors = Some(v);
            }
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(r) = min_height_ratio {
                cfg.min_height_ratio = r;
            }
            if let Some(s) = min_slope {
                cfg.min_slope = s;
            }
            if let Some(n) = min_cluster_size {
                cfg.min_cluster_size = n;
            }
            let summary = pipeline::run(&cfg, pipeline::default_transport(&cfg), stop_after)?;
            for p in &summary.written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
