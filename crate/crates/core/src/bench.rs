//! Indexing and query benchmarks.
//!
//! Three scenarios, each repeated (32 times by default) and summarized as
//! mean and standard deviation:
//!
//! - `index`: time to build an index from an image directory, without
//!   writing the binary copy.
//! - `query_cold`: load the index from disk, embed the query, rank. Either
//!   in-process with freshly loaded state every time, or by spawning a new
//!   process per repetition.
//! - `query_warm`: the index is already in memory; embed and rank only.
//!
//! Standard deviations are population values (divide by n).

use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{reference_embed, EmbeddingProvider};
use crate::index::{self, BuildOptions, ImageRecord, IndexError, SearchIndex};
use crate::search::{self, SearchError};

pub const DEFAULT_REPETITIONS: usize = 32;

/// Query used throughout the benchmarks.
pub const DEFAULT_QUERY: &str = "a cat exploring the dark night";

const CORPUS_IMAGE_SIDE: u32 = 24;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode corpus image: {0}")]
    Encode(String),
    #[error("spawned query process failed: {0}")]
    Process(String),
    #[error("endpoint query failed: {0}")]
    Endpoint(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Index,
    QueryCold,
    QueryWarm,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Index => "index",
            Scenario::QueryCold => "query_cold",
            Scenario::QueryWarm => "query_warm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSizes {
    pub json_bytes: u64,
    pub binary_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scenario: Scenario,
    pub dataset_label: String,
    pub n_images: usize,
    pub repetitions: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub per_image_seconds: Option<f64>,
    pub index_sizes: Option<IndexSizes>,
}

impl BenchResult {
    pub fn from_samples(
        scenario: Scenario,
        dataset_label: impl Into<String>,
        n_images: usize,
        samples: &[f64],
    ) -> Self {
        let (mean, std) = mean_std(samples);
        Self {
            scenario,
            dataset_label: dataset_label.into(),
            n_images,
            repetitions: samples.len(),
            mean_seconds: mean,
            std_seconds: std,
            per_image_seconds: (scenario == Scenario::Index && n_images > 0)
                .then(|| mean / n_images as f64),
            index_sizes: None,
        }
    }
}

/// Mean and population standard deviation. `(0, 0)` for no samples.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `f` `repetitions` times, returning wall-clock seconds per run.
pub fn time_repetitions<E, F>(repetitions: usize, mut f: F) -> Result<Vec<f64>, E>
where
    F: FnMut() -> Result<(), E>,
{
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(samples)
}

fn check_reps(repetitions: usize) -> Result<(), BenchError> {
    if repetitions == 0 {
        Err(BenchError::NoRepetitions)
    } else {
        Ok(())
    }
}

/// File name of corpus image `i`.
pub fn corpus_file_name(i: usize) -> String {
    format!("img_{i:06}.png")
}

/// Writes `n` small noise PNGs into `out_dir`. Image `i` depends only on
/// `(seed, i)`, so corpora with the same seed share their common prefix.
pub fn make_corpus(n: usize, seed: u64, out_dir: &Path) -> Result<(), BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyCorpus);
    }
    fs::create_dir_all(out_dir).map_err(|source| BenchError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let base: [u8; 3] = rng.random();
        let img = image::RgbImage::from_fn(CORPUS_IMAGE_SIDE, CORPUS_IMAGE_SIDE, |x, y| {
            let noise: u8 = rng.random_range(0..64);
            image::Rgb([
                base[0].wrapping_add((x * 8) as u8).wrapping_add(noise),
                base[1].wrapping_add((y * 8) as u8).wrapping_add(noise),
                base[2].wrapping_add(noise),
            ])
        });
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| BenchError::Encode(e.to_string()))?;
        let path = out_dir.join(corpus_file_name(i));
        fs::write(&path, buf.into_inner()).map_err(|source| BenchError::Io { path, source })?;
    }
    Ok(())
}

/// An index of `n` records with reference embeddings, without touching any
/// image files. Used for query benchmarks at sizes where building a real
/// corpus would dominate the run.
pub fn synthetic_index(
    provider: &dyn EmbeddingProvider,
    n: usize,
    seed: u64,
) -> Result<SearchIndex, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyCorpus);
    }
    let descriptor = provider.descriptor();
    let records = (0..n)
        .map(|i| {
            let mut key = seed.to_le_bytes().to_vec();
            key.extend_from_slice(&(i as u64).to_le_bytes());
            ImageRecord::new(
                corpus_file_name(i),
                reference_embed(&key, descriptor.dimension),
            )
        })
        .collect();
    Ok(SearchIndex::new(descriptor.model_ref(), records, None)?)
}

/// Times [`index::build_index`] over `corpus_dir`.
pub fn bench_index(
    corpus_dir: &Path,
    provider: &dyn EmbeddingProvider,
    options: &BuildOptions,
    repetitions: usize,
    label: &str,
) -> Result<BenchResult, BenchError> {
    check_reps(repetitions)?;
    let mut n_images = 0;
    let samples = time_repetitions(repetitions, || {
        let (idx, _) = index::build_index(corpus_dir, provider, options)?;
        n_images = idx.len();
        Ok::<_, BenchError>(())
    })?;
    Ok(BenchResult::from_samples(
        Scenario::Index,
        label,
        n_images,
        &samples,
    ))
}

/// The two files of a persisted index.
#[derive(Debug, Clone)]
pub struct IndexFiles {
    pub json: PathBuf,
    pub binary: PathBuf,
}

impl IndexFiles {
    /// Writes `index` in both formats as `<dir>/<stem>.json` and `.csix`.
    pub fn write(index: &SearchIndex, dir: &Path, stem: &str) -> Result<Self, BenchError> {
        let files = Self {
            json: dir.join(format!("{stem}.json")),
            binary: dir.join(format!("{stem}.csix")),
        };
        index::save_json(index, &files.json)?;
        index::save_binary(index, &files.binary)?;
        Ok(files)
    }

    pub fn sizes(&self) -> Result<IndexSizes, BenchError> {
        let size = |p: &Path| {
            fs::metadata(p)
                .map(|m| m.len())
                .map_err(|source| BenchError::Io {
                    path: p.to_path_buf(),
                    source,
                })
        };
        Ok(IndexSizes {
            json_bytes: size(&self.json)?,
            binary_bytes: size(&self.binary)?,
        })
    }
}

/// How a cold query repetition gets its fresh state.
pub enum ColdMode<'a> {
    /// Load, embed and rank in this process, dropping everything afterwards.
    InProcess {
        provider: &'a dyn EmbeddingProvider,
        k: Option<usize>,
    },
    /// Run a command per repetition; it must exit successfully.
    Process(&'a dyn Fn() -> Command),
}

/// Cold-start query timing against the binary index file.
pub fn bench_query_cold(
    files: &IndexFiles,
    query: &str,
    mode: ColdMode<'_>,
    repetitions: usize,
    label: &str,
) -> Result<BenchResult, BenchError> {
    check_reps(repetitions)?;
    let sizes = files.sizes()?;
    let n_images = index::load_binary(&files.binary)?.len();
    let samples = match mode {
        ColdMode::InProcess { provider, k } => time_repetitions(repetitions, || {
            let idx = index::load_binary(&files.binary)?;
            let results = search::search_text(&idx, provider, query, k)?;
            std::hint::black_box(results);
            Ok::<_, BenchError>(())
        })?,
        ColdMode::Process(make_command) => time_repetitions(repetitions, || {
            let status = make_command()
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status()
                .map_err(|e| BenchError::Process(e.to_string()))?;
            if status.success() {
                Ok(())
            } else {
                Err(BenchError::Process(format!("exited with {status}")))
            }
        })?,
    };
    let mut result = BenchResult::from_samples(Scenario::QueryCold, label, n_images, &samples);
    result.index_sizes = Some(sizes);
    Ok(result)
}

/// Warm query timing: `index` is already resident, each repetition embeds
/// the query and ranks all records.
pub fn bench_query_warm(
    index: &SearchIndex,
    provider: &dyn EmbeddingProvider,
    query: &str,
    k: Option<usize>,
    repetitions: usize,
    label: &str,
) -> Result<BenchResult, BenchError> {
    check_reps(repetitions)?;
    let samples = time_repetitions(repetitions, || {
        let results = search::search_text(index, provider, query, k)?;
        std::hint::black_box(results);
        Ok::<_, BenchError>(())
    })?;
    Ok(BenchResult::from_samples(
        Scenario::QueryWarm,
        label,
        index.len(),
        &samples,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

const TABLE_HEADER: [&str; 9] = [
    "scenario",
    "dataset",
    "# images",
    "repetitions",
    "average time [s]",
    "std time [s]",
    "avg time per image [s]",
    "json index size [MB]",
    "binary index size [MB]",
];

fn three_decimals(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders results as an aligned text table (every real rounded to three
/// decimals, sizes in MB of 10^6 bytes) or as lossless JSON.
pub fn emit_report(results: &[BenchResult], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(results).expect("bench results always serialize")
        }
        ReportFormat::Table => {
            let rows: Vec<[String; 9]> = results
                .iter()
                .map(|r| {
                    let mb = |b: u64| three_decimals(b as f64 / 1e6);
                    [
                        r.scenario.as_str().to_string(),
                        r.dataset_label.clone(),
                        r.n_images.to_string(),
                        r.repetitions.to_string(),
                        three_decimals(r.mean_seconds),
                        three_decimals(r.std_seconds),
                        r.per_image_seconds.map_or("-".into(), three_decimals),
                        r.index_sizes.map_or("-".into(), |s| mb(s.json_bytes)),
                        r.index_sizes.map_or("-".into(), |s| mb(s.binary_bytes)),
                    ]
                })
                .collect();
            let mut widths = TABLE_HEADER.map(str::len);
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.len());
                }
            }
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(widths)
                    .enumerate()
                    .map(|(i, (c, w))| {
                        if i < 2 {
                            format!("{c:<w$}")
                        } else {
                            format!("{c:>w$}")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let mut out = line(&TABLE_HEADER.map(String::from));
            out.push('\n');
            out.push_str(
                &widths
                    .iter()
                    .map(|w| "-".repeat(*w))
                    .collect::<Vec<_>>()
                    .join("  "),
            );
            out.push('\n');
            for row in &rows {
                out.push_str(&line(row));
                out.push('\n');
            }
            out
        }
    }
}
