use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use clipse_core::bench::{
    self, BenchResult, ColdMode, IndexFiles, ReportFormat, DEFAULT_QUERY, DEFAULT_REPETITIONS,
};
use clipse_core::embedding::{EmbeddingProvider, DEFAULT_DIMENSION};
use clipse_core::index::BuildOptions;
use clipse_core::SearchIndex;
use clipse_server::client::bench_endpoint_warm;
use clipse_server::AppState;

use crate::commands::provider;
use crate::{CmdResult, Failure, Globals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Index,
    Cold,
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColdModeArg {
    /// Spawn `clipse query` per repetition.
    Process,
    /// Load and query inside this process, dropping all state each time.
    InProcess,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WarmModeArg {
    InProcess,
    /// HTTP round-trips against a server (started locally unless
    /// --endpoint is given).
    Endpoint,
    Both,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Scenarios to run, comma-separated.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "index,cold,warm"
    )]
    pub scenario: Vec<ScenarioArg>,
    /// Corpus sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    pub corpus_size: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    pub repetitions: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = ColdModeArg::Both)]
    pub cold_mode: ColdModeArg,
    #[arg(long, value_enum, default_value_t = WarmModeArg::InProcess)]
    pub warm_mode: WarmModeArg,
    /// Running server to time in endpoint warm mode.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = DEFAULT_QUERY)]
    pub query: String,
    /// Results per query.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

pub fn run(globals: &Globals, args: BenchArgs) -> CmdResult {
    if args.repetitions == 0 {
        return Err(Failure::op("--repetitions must be at least 1"));
    }
    if args.corpus_size.contains(&0) {
        return Err(Failure::op("--corpus-size must be at least 1"));
    }
    let dimension = globals.dimension.unwrap_or(DEFAULT_DIMENSION);
    let provider: Arc<dyn EmbeddingProvider> = Arc::from(provider(globals, dimension)?);
    let work = tempfile::tempdir().map_err(Failure::op)?;

    let mut results = Vec::new();
    for &n in &args.corpus_size {
        let label = format!("synthetic-{n}");
        for &scenario in &args.scenario {
            let dir = work.path().join(format!("{n}-{scenario:?}"));
            std::fs::create_dir_all(&dir).map_err(Failure::op)?;
            log::info!("bench {scenario:?} n={n}");
            match scenario {
                ScenarioArg::Index => {
                    bench::make_corpus(n, args.seed, &dir).map_err(Failure::op)?;
                    results.push(
                        bench::bench_index(
                            &dir,
                            provider.as_ref(),
                            &BuildOptions::default(),
                            args.repetitions,
                            &label,
                        )
                        .map_err(Failure::op)?,
                    );
                }
                ScenarioArg::Cold => {
                    let index = bench::synthetic_index(provider.as_ref(), n, args.seed)
                        .map_err(Failure::op)?;
                    let files = IndexFiles::write(&index, &dir, "index").map_err(Failure::op)?;
                    results.extend(cold(globals, &args, provider.as_ref(), &files, &label)?);
                }
                ScenarioArg::Warm => {
                    let index = bench::synthetic_index(provider.as_ref(), n, args.seed)
                        .map_err(Failure::op)?;
                    results.extend(warm(&args, &provider, index, &dir, &label)?);
                }
            }
        }
    }

    let format = match args.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Json => ReportFormat::Json,
    };
    println!("{}", bench::emit_report(&results, format));
    Ok(())
}

fn cold(
    globals: &Globals,
    args: &BenchArgs,
    provider: &dyn EmbeddingProvider,
    files: &IndexFiles,
    label: &str,
) -> Result<Vec<BenchResult>, Failure> {
    let mut out = Vec::new();
    if matches!(args.cold_mode, ColdModeArg::InProcess | ColdModeArg::Both) {
        let mode = ColdMode::InProcess {
            provider,
            k: Some(args.k),
        };
        out.push(
            bench::bench_query_cold(
                files,
                &args.query,
                mode,
                args.repetitions,
                &format!("{label} in-process"),
            )
            .map_err(Failure::op)?,
        );
    }
    if matches!(args.cold_mode, ColdModeArg::Process | ColdModeArg::Both) {
        let exe = std::env::current_exe().map_err(Failure::op)?;
        let dimension = provider.descriptor().dimension;
        let make = || {
            let mut cmd = Command::new(&exe);
            cmd.args(["--embedder", &globals.embedder])
                .args(["--dimension", &dimension.to_string()])
                .arg("query")
                .arg("--index")
                .arg(&files.binary)
                .args(["--mode", "plain", "-k", &args.k.to_string(), "--"])
                .arg(&args.query)
                .env("RUST_LOG", "off");
            cmd
        };
        out.push(
            bench::bench_query_cold(
                files,
                &args.query,
                ColdMode::Process(&make),
                args.repetitions,
                &format!("{label} process"),
            )
            .map_err(Failure::op)?,
        );
    }
    Ok(out)
}

fn warm(
    args: &BenchArgs,
    provider: &Arc<dyn EmbeddingProvider>,
    index: SearchIndex,
    dir: &Path,
    label: &str,
) -> Result<Vec<BenchResult>, Failure> {
    let mut out = Vec::new();
    if matches!(args.warm_mode, WarmModeArg::InProcess | WarmModeArg::Both) {
        out.push(
            bench::bench_query_warm(
                &index,
                provider.as_ref(),
                &args.query,
                Some(args.k),
                args.repetitions,
                &format!("{label} in-process"),
            )
            .map_err(Failure::op)?,
        );
    }
    if matches!(args.warm_mode, WarmModeArg::Endpoint | WarmModeArg::Both) {
        let endpoint_label = format!("{label} endpoint");
        let result = match &args.endpoint {
            Some(url) => bench_endpoint_warm(url, &args.query, args.repetitions, &endpoint_label),
            None => {
                let state = AppState::new(provider.clone(), dir.to_path_buf(), args.k, None);
                state
                    .set_ready(clipse_server::Backend::Single(index))
                    .map_err(Failure::op)?;
                let server = clipse_server::start(state, "127.0.0.1:0").map_err(Failure::op)?;
                bench_endpoint_warm(
                    &server.base_url(),
                    &args.query,
                    args.repetitions,
                    &endpoint_label,
                )
            }
        };
        out.push(result.map_err(Failure::op)?);
    }
    Ok(out)
}
