//! `gmmret`: corpus ingestion, training, index lifecycle, querying,
//! evaluation and benchmarking for mixture-embedding retrieval.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gmmret", version, about = "Mixture-embedding response retrieval")]
struct Cli {
    /// Caps the worker threads used inside library calls.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Suppresses progress output on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes a synthetic one-to-many pair corpus.
    Synth(SynthArgs),
    /// Trains context and response generators on a pair corpus.
    Train(TrainArgs),
    /// Embeds corpus lines into a binary mixture store.
    Embed(EmbedArgs),
    /// Builds or queries an inverted-file index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Retrieval and response-quality metrics against an index.
    Eval(EvalArgs),
    /// Per-query latency of retrieval backends.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Ctx,
    Resp,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    topics: usize,
    #[arg(long, default_value_t = 10)]
    contexts_per_topic: usize,
    #[arg(long, default_value_t = 2)]
    responses_per_context: usize,
    #[arg(long, default_value_t = 4)]
    subclusters: usize,
    /// Shared facet pool size; 0 keeps facets private to each topic.
    #[arg(long, default_value_t = 0)]
    facet_pool: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    generic_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Line-delimited pair records (`id`, `context`, `response`).
    #[arg(long)]
    pairs: PathBuf,
    /// `key=value` file; keys as in the training config plus `dim` and `hash_seed`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for weights, model settings and the loss history.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Corpus items (`id` plus `text` or `tokens`), or pair records with `--from-pairs`.
    #[arg(long)]
    input: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    side: Side,
    /// Reads pair records and embeds the field matching `--side`, keyed by pair id.
    #[arg(long)]
    from_pairs: bool,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Clusters component means and writes an index file.
    Build(IndexBuildArgs),
    /// Prints `rank<TAB>id<TAB>score`, best (lowest divergence) first.
    Query(IndexQueryArgs),
}

#[derive(Debug, Args)]
pub struct IndexBuildArgs {
    #[arg(long)]
    gmms: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Coarse cells; defaults to ceil(sqrt(total component means)).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    cells: Option<u32>,
    /// Cells probed per query; defaults to max(1, cells / 16).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    n_probe: Option<u32>,
    #[arg(long, default_value_t = 25)]
    kmeans_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct IndexQueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Context text; needs `--weights`.
    #[arg(long, conflicts_with = "context_gmm", required_unless_present = "context_gmm")]
    context: Option<String>,
    /// A single mixture file (or the first record of a store) to use as the context.
    #[arg(long)]
    context_gmm: Option<PathBuf>,
    /// Directory written by `train`; required with `--context`.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    top_m: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    per_component_k: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    n_probe: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Recall,
    Mrr,
    Bleu2,
    Bleu4,
    Diversity,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    /// Pairs whose ids name their true response in the index.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Response texts for BLEU and diversity, keyed by id; defaults to `--pairs`.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10", value_parser = clap::value_parser!(u32).range(1..))]
    k: Vec<u32>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "recall,mrr,bleu2,bleu4,diversity")]
    metrics: Vec<Metric>,
    /// Retrieved set size for diversity.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    diversity_top: u32,
    /// Also writes the metrics as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    n_probe: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Dot,
    Maxsim,
    Index,
    Scan,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    /// Pairs supplying query contexts and the response texts for the token backends.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dot,maxsim,index,scan")]
    backends: Vec<Backend>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    queries: u32,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    top_m: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<gmmret::Error> for CliError {
    fn from(e: gmmret::Error) -> Self {
        use std::io::ErrorKind;
        match &e {
            gmmret::Error::Io(io) if matches!(io.kind(), ErrorKind::NotFound | ErrorKind::PermissionDenied | ErrorKind::InvalidData) => {
                CliError::Data(e.to_string())
            }
            _ if e.is_data_error() => CliError::Data(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        gmmret::Error::Io(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    let progress = !cli.quiet;
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a, progress),
        Command::Embed(a) => commands::embed(a, progress),
        Command::Index(IndexCommand::Build(a)) => commands::index_build(a, progress),
        Command::Index(IndexCommand::Query(a)) => commands::index_query(a),
        Command::Eval(a) => commands::eval(a, progress),
        Command::Bench(a) => commands::bench(a, progress),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
