//! `bookcbr`: ingest corpora, import seed cases, recommend, compare metrics
//! and run the HTTP service.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod config;
mod eval;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use bookcbr::ingest::{corpus_report, filter_dump, IngestError};
use bookcbr::{
    CaseStore, Engine, EngineConfig, EngineError, ExpertPanel, Metric, Pipeline, ReviewBoard,
    TextError,
};
use bookcbr_api::wire::RecommendationBody;
use bookcbr_api::AppState;
use clap::{Parser, Subcommand};

use config::CliConfig;

const REVIEWS_FILE: &str = "reviews.json";

#[derive(Parser)]
#[command(name = "bookcbr", version, about = "Case-based book recommender")]
struct Cli {
    /// Config file (flat TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Case store directory.
    #[arg(long, global = true)]
    store_dir: Option<PathBuf>,
    /// Similarity metric: jaccard, cosine or softcosine.
    #[arg(long, global = true)]
    metric: Option<Metric>,
    /// Embedding table for the vector metrics.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a line-delimited tweet dump into a reader corpus.
    Ingest {
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load seed cases (JSON array of {text, book_title, personality}).
    ImportSeed { file: PathBuf },
    /// One-shot recommendation, printed as JSON.
    Recommend {
        #[arg(long)]
        text: String,
    },
    /// Similarity and timing per metric for a file of labelled text pairs.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Domain(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn domain(e: impl ToString) -> Failure {
    Failure::Domain(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            require_file(path)?;
            CliConfig::load(path).map_err(Failure::Usage)?
        }
        None => CliConfig::default(),
    };
    if let Some(dir) = cli.store_dir {
        config.store_dir = Some(dir);
    }
    if let Some(metric) = cli.metric {
        config.similarity.metric = Some(metric);
    }
    if let Some(path) = cli.embeddings {
        config.embeddings_path = Some(path);
    }

    match cli.command {
        Command::Ingest { dump, out } => ingest(&config, &dump, &out),
        Command::ImportSeed { file } => import_seed(&config, &file),
        Command::Recommend { text } => recommend(&config, &text),
        Command::Eval { pairs, json } => evaluate(&config, &pairs, json),
        Command::Serve { listen } => {
            if let Some(addr) = listen {
                config.listen = Some(addr);
            }
            serve(&config)
        }
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("no such file: {}", path.display())))
    }
}

fn pipeline(config: &CliConfig) -> Result<Pipeline, Failure> {
    for path in config.embeddings_path.iter().chain(config.stopwords_path.iter()) {
        require_file(path)?;
    }
    Pipeline::from_config(config.pipeline()).map_err(|e| match e {
        TextError::Io { .. } => usage(e.to_string()),
        e => domain(format!("embeddings: {e}")),
    })
}

fn open_store(config: &CliConfig) -> Result<Arc<CaseStore>, Failure> {
    let store = CaseStore::open(config.store_dir(), pipeline(config)?).map_err(domain)?;
    Ok(Arc::new(store))
}

/// Engine for single-shot commands: votes never happen, so the panel only
/// has to be well-formed.
fn offline_engine(config: &CliConfig) -> Result<Engine, Failure> {
    let engine_config = config.engine().map_err(Failure::Usage)?;
    let ids = config
        .expert_ids()
        .unwrap_or_else(|_| vec!["expert-1".into(), "expert-2".into(), "expert-3".into()]);
    let panel = ExpertPanel::new(ids).map_err(|e| usage(e.to_string()))?;
    Ok(Engine::new(open_store(config)?, Arc::new(ReviewBoard::new(panel)), engine_config)?)
}

fn ingest(config: &CliConfig, dump: &Path, out: &Path) -> Result<(), Failure> {
    require_file(dump)?;
    let pipeline = pipeline(config)?;
    let corpus = filter_dump(dump, &pipeline).map_err(|e| match e {
        IngestError::EmptyDump => domain(format!("EmptyDump: {} has no records", dump.display())),
        e => domain(e),
    })?;
    std::fs::create_dir_all(out).map_err(|e| domain(format!("cannot create {}: {e}", out.display())))?;
    write_json(&out.join("corpus.json"), &corpus)?;
    write_json(&out.join("corpus_stats.json"), &corpus.stats)?;
    print!("{}", corpus_report(&corpus));
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut body = serde_json::to_string_pretty(value).map_err(domain)?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| domain(format!("cannot write {}: {e}", path.display())))
}

fn import_seed(config: &CliConfig, file: &Path) -> Result<(), Failure> {
    require_file(file)?;
    config.engine().map_err(Failure::Usage)?;
    let store = open_store(config)?;
    let loaded = store.import_seed(file).map_err(domain)?;
    println!("{loaded} cases loaded");
    Ok(())
}

fn recommend(config: &CliConfig, text: &str) -> Result<(), Failure> {
    if text.trim().is_empty() {
        return Err(usage("--text must not be empty"));
    }
    let engine = offline_engine(config)?;
    let rec = engine.recommend(text)?;
    let body = serde_json::to_string_pretty(&RecommendationBody::new(&rec, None)).map_err(domain)?;
    println!("{body}");
    Ok(())
}

fn evaluate(config: &CliConfig, pairs: &Path, json: bool) -> Result<(), Failure> {
    require_file(pairs)?;
    let pipeline = pipeline(config)?;
    let pairs = eval::load_pairs(pairs).map_err(Failure::Domain)?;
    let results = eval::evaluate(&pairs, &pipeline);
    if json {
        println!("{}", serde_json::to_string_pretty(&results).map_err(domain)?);
    } else {
        print!("{}", eval::Table(&results));
    }
    Ok(())
}

fn serve(config: &CliConfig) -> Result<(), Failure> {
    let engine_config: EngineConfig = config.engine().map_err(Failure::Usage)?;
    let addr = config.listen().map_err(Failure::Usage)?;
    let panel = ExpertPanel::new(config.expert_ids().map_err(Failure::Usage)?).map_err(|e| usage(e.to_string()))?;
    let store = open_store(config)?;
    let board = ReviewBoard::with_file(config.store_dir().join(REVIEWS_FILE), panel).map_err(domain)?;
    let engine = Engine::new(store, Arc::new(board), engine_config)?;
    let state = AppState::new(engine, &config.experts).map_err(Failure::Usage)?;

    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let runtime = tokio::runtime::Runtime::new().map_err(domain)?;
    runtime.block_on(async move {
        let listener = bookcbr_api::bind(addr)
            .await
            .map_err(|e| domain(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(domain)?;
        println!("listening on {local}");
        let _ = std::io::stdout().flush();
        tokio::select! {
            served = bookcbr_api::serve(listener, state) => served.map_err(domain),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
