mod bench_cmd;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status and message of a failed command.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Operational error, exit status 1.
    pub fn op(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    /// Nothing to work with (e.g. no indexable images), exit status 2.
    pub fn empty(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "clipse", version, about = "Self-hosted text-to-image search")]
struct Cli {
    /// Embedding provider.
    #[arg(long, global = true, default_value = "reference")]
    embedder: String,

    /// Embedding dimension for the reference embedder. Defaults to the
    /// index dimension when querying, 512 when building.
    #[arg(long, global = true)]
    dimension: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed every image in a directory and write the index.
    Build(BuildArgs),
    /// Rank indexed images against a text query.
    Query(QueryArgs),
    /// Convert a JSON index to the CSIX binary format.
    Convert(ConvertArgs),
    /// Serve the search API and web UI.
    Serve(ServeArgs),
    /// Run the indexing and query benchmarks on synthetic data.
    Bench(bench_cmd::BenchArgs),
    /// Split an index into shards plus a manifest.
    ShardSplit(ShardSplitArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Directory of images.
    pub image_dir: PathBuf,
    /// JSON output path.
    #[arg(long = "json", default_value = "index.json")]
    pub out_json: PathBuf,
    /// Binary output path [default: the JSON path with a .csix extension].
    #[arg(long = "binary")]
    pub out_binary: Option<PathBuf>,
    /// Skip writing the binary index.
    #[arg(long)]
    pub no_binary: bool,
    /// Comma-separated file extensions to index.
    #[arg(long, value_delimiter = ',', default_value = "png,jpg,jpeg,webp")]
    pub extensions: Vec<String>,
    #[arg(long)]
    pub follow_symlinks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryMode {
    /// Colored table; falls back to plain when stdout is not a terminal.
    Pretty,
    /// `rank<TAB>score<TAB>path` lines.
    Plain,
    /// Read queries from stdin, one per line.
    Interactive,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// Index file (JSON or CSIX).
    #[arg(long)]
    pub index: PathBuf,
    /// Query text; required unless --mode interactive.
    pub query: Option<String>,
    /// Number of results.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = QueryMode::Pretty)]
    pub mode: QueryMode,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    pub in_json: PathBuf,
    pub out_binary: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Index file to serve.
    #[arg(long, conflicts_with = "shards", required_unless_present = "shards")]
    pub index: Option<PathBuf>,
    /// Shard manifest to serve instead of a single index.
    #[arg(long)]
    pub shards: Option<PathBuf>,
    /// Directory the indexed image paths are relative to.
    #[arg(long)]
    pub images_root: PathBuf,
    /// Listen address; CLIPSE_BIND takes precedence.
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long, default_value_t = clipse_core::search::DEFAULT_PAGE_SIZE)]
    pub page_size: usize,
    /// Directory with the web UI bundle.
    #[arg(long)]
    pub web_root: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ShardSplitArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Number of shards.
    #[arg(long = "shards")]
    pub count: usize,
    /// Output directory for shard files and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub struct Globals {
    pub embedder: String,
    pub dimension: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let globals = Globals {
        embedder: cli.embedder,
        dimension: cli.dimension,
    };
    let result = match cli.command {
        Command::Build(a) => commands::build(&globals, a),
        Command::Query(a) => commands::query(&globals, a),
        Command::Convert(a) => commands::convert(a),
        Command::Serve(a) => commands::serve(&globals, a),
        Command::Bench(a) => bench_cmd::run(&globals, a),
        Command::ShardSplit(a) => commands::shard_split(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
