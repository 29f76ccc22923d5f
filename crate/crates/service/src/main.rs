use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use screencoder::backends::{build, BackendKind, BackendSettings};
use screencoder::http::router;
use screencoder::session::SessionStore;
use screencoder_core::canonical::to_canonical_json;
use screencoder_core::eval::{evaluate, ingest_ocr_blocks, resolve_blocks, BlockSet};
use screencoder_core::generation::parse_html;
use screencoder_core::grounding::MainContentMode;
use screencoder_core::pipeline::{self, sidecar_blocks, write_artifacts, AssetMode, PipelineConfig, RunInputs, RunStatus};
use screencoder_core::placeholder::ingest_detections;
use screencoder_core::raster::PageImage;
use screencoder_engine::{filter_by_reward, run_batch, BatchConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_DEGRADED: u8 = 2;

#[derive(Parser)]
#[command(name = "screencoder", version, about = "Turn UI screenshots into HTML")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage on one screenshot and write the artifacts.
    Run(RunArgs),
    /// Process a directory of screenshots into a JSONL dataset.
    Batch(BatchArgs),
    /// Keep the dataset records whose composite reward reaches a floor.
    Filter(FilterArgs),
    /// Score a page against reference blocks.
    Eval(EvalArgs),
    /// Serve the session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    /// Grounding fixture for the mock backend.
    #[arg(long)]
    grounding_fixture: Option<PathBuf>,
    /// Generation fixture for the mock backend.
    #[arg(long)]
    generation_fixture: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline configuration as JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_main_content)]
    main_content: Option<MainContentMode>,
    /// Fail instead of recovering missing regions or substituting templates.
    #[arg(long)]
    no_fallback: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Assets {
    /// Data URIs inside index.html.
    Inline,
    /// PNG files under assets/ next to index.html.
    Directory,
}

#[derive(Args)]
struct RunArgs {
    image: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    backends: BackendArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// External element detections; the baseline detector runs otherwise.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Reference blocks for scoring; defaults to `<stem>.blocks.json` beside the image.
    #[arg(long)]
    blocks: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Assets::Inline)]
    assets: Assets,
}

#[derive(Args)]
struct BatchArgs {
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Leave start and finish times out of the records.
    #[arg(long)]
    no_timestamps: bool,
    #[command(flatten)]
    backends: BackendArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct FilterArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    floor: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference block file.
    #[arg(long)]
    reference: PathBuf,
    /// Generated page, scored through the layout resolver.
    #[arg(long, conflicts_with = "candidate", required_unless_present = "candidate")]
    html: Option<PathBuf>,
    /// Candidate block file.
    #[arg(long)]
    candidate: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory holding one subdirectory per session.
    #[arg(long, default_value = "sessions")]
    sessions: PathBuf,
    #[command(flatten)]
    backends: BackendArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn parse_main_content(s: &str) -> Result<MainContentMode, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Batch(a) => batch(a),
        Command::Filter(a) => filter(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut config: PipelineConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = args.main_content {
        config.grounding.main_content = m;
    }
    if args.no_fallback {
        config.grounding.fallback = false;
        config.generation.substitute = false;
    }
    Ok(config)
}

fn backend_settings(args: &BackendArgs) -> Result<BackendSettings> {
    Ok(BackendSettings {
        kind: args.backend,
        grounding_fixture: args.grounding_fixture.clone(),
        generation_fixture: args.generation_fixture.clone(),
        ..BackendSettings::default()
    }
    .with_env()?)
}

fn warn_all(source: &Path, warnings: &[String]) {
    for w in warnings {
        log::warn!("{}: {w}", source.display());
    }
}

fn read_blocks(path: &Path) -> Result<BlockSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (blocks, warnings) = ingest_ocr_blocks(&text).with_context(|| format!("parsing {}", path.display()))?;
    warn_all(path, &warnings);
    Ok(blocks)
}

fn run(args: RunArgs) -> Result<u8> {
    let config = pipeline_config(&args.pipeline)?;
    let set = build(&backend_settings(&args.backends)?)?;
    let shot = PageImage::open(&args.image).with_context(|| format!("opening {}", args.image.display()))?;
    let detections = match &args.detections {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let (elements, warnings) = ingest_detections(&text, shot.width(), shot.height())?;
            warn_all(p, &warnings);
            Some(elements)
        }
        None => None,
    };
    let reference_blocks = match &args.blocks {
        Some(p) => Some(read_blocks(p)?),
        None => sidecar_blocks(&args.image)?.map(|(blocks, warnings)| {
            warn_all(&args.image, &warnings);
            blocks
        }),
    };
    let inputs = RunInputs {
        detections,
        reference_blocks,
    };
    let out = pipeline::run(&shot, &set.borrow(), inputs, &config)?;
    let assets = match args.assets {
        Assets::Inline => AssetMode::Inline,
        Assets::Directory => AssetMode::Directory,
    };
    write_artifacts(&out, &args.out, assets)?;
    warn_all(&args.image, &out.report.warnings);
    let composite = out
        .metrics
        .as_ref()
        .map_or_else(|| "n/a".to_string(), |m| format!("{:.4}", m.rewards.composite));
    println!(
        "{}: {} (composite {composite})",
        args.out.display(),
        match out.status() {
            RunStatus::Ok => "ok",
            RunStatus::Degraded => "degraded",
        }
    );
    Ok(match out.status() {
        RunStatus::Ok => 0,
        RunStatus::Degraded => EXIT_DEGRADED,
    })
}

fn batch(args: BatchArgs) -> Result<u8> {
    let set = build(&backend_settings(&args.backends)?)?;
    let mut config = BatchConfig {
        pipeline: pipeline_config(&args.pipeline)?,
        timestamps: !args.no_timestamps,
        ..BatchConfig::default()
    };
    if let Some(w) = args.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        config.workers = w;
    }
    let outcome = run_batch(&args.corpus, &args.out, &set.borrow(), &config)?;
    let s = &outcome.manifest.summary;
    println!(
        "{} processed, {} skipped: {} ok, {} degraded, {} failed",
        outcome.processed, outcome.skipped, s.ok, s.degraded, s.failed
    );
    Ok(if s.degraded + s.failed > 0 { EXIT_DEGRADED } else { 0 })
}

fn filter(args: FilterArgs) -> Result<u8> {
    let report = filter_by_reward(&args.input, &args.output, args.floor)?;
    println!("{}", to_canonical_json(&report));
    Ok(0)
}

fn eval(args: EvalArgs) -> Result<u8> {
    let config: PipelineConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    let reference = read_blocks(&args.reference)?;
    let candidate = match (&args.html, &args.candidate) {
        (Some(html), _) => {
            let text = std::fs::read_to_string(html).with_context(|| format!("reading {}", html.display()))?;
            let doc = parse_html(&text).with_context(|| format!("parsing {}", html.display()))?;
            resolve_blocks(&doc, (doc.page_size.width, doc.page_size.height))?
        }
        (None, Some(p)) => read_blocks(p)?,
        (None, None) => bail!("either --html or --candidate is required"),
    };
    let (rewards, matching) = evaluate(&reference, &candidate, &config.eval)?;
    let out = pipeline::Metrics {
        schema_version: pipeline::REPORT_SCHEMA_VERSION,
        source: pipeline::MetricsSource::Ocr,
        reference_blocks: reference.blocks.len(),
        candidate_blocks: candidate.blocks.len(),
        matched: matching.pairs.len(),
        rewards,
    };
    println!("{}", to_canonical_json(&out));
    Ok(0)
}

fn serve(args: ServeArgs) -> Result<u8> {
    let config = pipeline_config(&args.pipeline)?;
    let set = build(&backend_settings(&args.backends)?)?;
    let store = Arc::new(SessionStore::new(&args.sessions, set, config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(store))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(0)
}
