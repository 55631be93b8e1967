use std::io::{self, BufRead, IsTerminal, Write};
use std::sync::Arc;

use clipse_core::embedding::{provider_by_name, EmbeddingProvider, DEFAULT_DIMENSION};
use clipse_core::index::{self, BuildOptions, IndexError};
use clipse_core::search::search_text;
use clipse_core::shard::{write_shards, ShardManifest};
use clipse_core::SearchIndex;
use clipse_server::config::preferred_index_file;
use clipse_server::ServerConfig;

use crate::output::{write_results, Style};
use crate::{BuildArgs, CmdResult, ConvertArgs, Failure, Globals, QueryArgs, QueryMode};
use crate::{ServeArgs, ShardSplitArgs};

pub fn provider(
    globals: &Globals,
    dimension: usize,
) -> Result<Box<dyn EmbeddingProvider>, Failure> {
    provider_by_name(&globals.embedder, globals.dimension.unwrap_or(dimension)).map_err(Failure::op)
}

fn index_failure(e: IndexError) -> Failure {
    match e {
        IndexError::EmptyIndex { .. } => Failure::empty(e),
        other => Failure::op(other),
    }
}

pub fn build(globals: &Globals, args: BuildArgs) -> CmdResult {
    let provider = provider(globals, DEFAULT_DIMENSION)?;
    let options = BuildOptions {
        follow_symlinks: args.follow_symlinks,
        ..BuildOptions::default()
    }
    .with_extensions(&args.extensions);
    let (index, report) =
        index::build_index(&args.image_dir, provider.as_ref(), &options).map_err(index_failure)?;
    for skipped in &report.skipped {
        eprintln!("skipped {}: {}", skipped.path, skipped.reason);
    }

    index::save_json(&index, &args.out_json).map_err(Failure::op)?;
    let binary = if args.no_binary {
        None
    } else {
        let path = args
            .out_binary
            .unwrap_or_else(|| args.out_json.with_extension("csix"));
        index::save_binary(&index, &path).map_err(Failure::op)?;
        Some(path)
    };

    println!("{report}");
    println!("wrote {}", args.out_json.display());
    if let Some(path) = binary {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn stdout_style(mode: QueryMode) -> Style {
    match mode {
        QueryMode::Plain => Style::Plain,
        _ if io::stdout().is_terminal() => Style::Pretty,
        _ => Style::Plain,
    }
}

fn run_query(
    out: &mut impl Write,
    index: &SearchIndex,
    provider: &dyn EmbeddingProvider,
    style: Style,
    query: &str,
    k: usize,
) -> CmdResult {
    let results = search_text(index, provider, query, Some(k)).map_err(Failure::op)?;
    write_results(out, style, query, &results).map_err(Failure::op)
}

pub fn query(globals: &Globals, args: QueryArgs) -> CmdResult {
    if args.k == 0 {
        return Err(Failure::op("-k must be at least 1"));
    }
    if args.mode != QueryMode::Interactive && args.query.is_none() {
        return Err(Failure::op("a query is required unless --mode interactive"));
    }
    let index = index::load_auto(&args.index).map_err(Failure::op)?;
    let provider = provider(globals, index.dimension())?;
    let style = stdout_style(args.mode);
    let stdout = io::stdout();
    let mut out = stdout.lock();

    if args.mode != QueryMode::Interactive {
        let query = args.query.unwrap_or_default();
        run_query(&mut out, &index, provider.as_ref(), style, &query, args.k)?;
        return out.flush().map_err(Failure::op);
    }

    let stdin = io::stdin();
    let prompt = stdin.is_terminal();
    if let Some(query) = &args.query {
        run_query(&mut out, &index, provider.as_ref(), style, query, args.k)?;
        writeln!(out).map_err(Failure::op)?;
    }
    loop {
        if prompt {
            eprint!("> ");
        }
        out.flush().map_err(Failure::op)?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(Failure::op)? == 0 {
            break;
        }
        let query = line.trim();
        if query.is_empty() {
            continue;
        }
        run_query(&mut out, &index, provider.as_ref(), style, query, args.k)?;
        writeln!(out).map_err(Failure::op)?;
    }
    if prompt {
        eprintln!();
    }
    Ok(())
}

pub fn convert(args: ConvertArgs) -> CmdResult {
    index::convert(&args.in_json, &args.out_binary).map_err(Failure::op)?;
    println!("wrote {}", args.out_binary.display());
    Ok(())
}

/// The dimension of whatever `serve` is about to load, read without loading
/// it.
fn served_dimension(args: &ServeArgs) -> Result<usize, Failure> {
    if let Some(path) = &args.shards {
        let manifest = ShardManifest::load(path).map_err(Failure::op)?;
        return Ok(manifest.model().map_err(Failure::op)?.dimension);
    }
    let path = args
        .index
        .as_deref()
        .expect("clap requires --index or --shards");
    let model = index::peek_model(&preferred_index_file(path)).map_err(Failure::op)?;
    Ok(model.dimension)
}

pub fn serve(globals: &Globals, args: ServeArgs) -> CmdResult {
    let dimension = match globals.dimension {
        Some(d) => d,
        None => served_dimension(&args)?,
    };
    let provider: Arc<dyn EmbeddingProvider> = Arc::from(provider(globals, dimension)?);
    let config = ServerConfig::from_options(
        args.index,
        args.shards,
        args.images_root,
        args.bind,
        args.page_size,
        args.web_root,
    )
    .map_err(Failure::op)?;
    clipse_server::run(config, provider).map_err(Failure::op)
}

pub fn shard_split(args: ShardSplitArgs) -> CmdResult {
    let index = index::load_auto(&args.index).map_err(Failure::op)?;
    let manifest = write_shards(&index, args.count, &args.out).map_err(Failure::op)?;
    println!(
        "{} records in {} shards, manifest {}",
        index.len(),
        args.count,
        manifest.display()
    );
    Ok(())
}
