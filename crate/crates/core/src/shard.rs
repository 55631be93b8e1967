//! Scatter-gather over a partitioned index.
//!
//! An index is split round-robin over its path order into disjoint shards.
//! A query is embedded once, every shard returns its local top-k, and the
//! partial lists are merged into the global top-k. Asking each shard for the
//! global `k` is always enough: any record in the global top-k is also in the
//! top-k of its own shard.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, EmbeddingProvider, ModelRef};
use crate::index::{self, IndexError, SearchIndex};
use crate::search::{self, rank_order, RankedResult, SearchError};

pub const MANIFEST_FORMAT_TAG: &str = "clipse-shards";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("cannot split {records} records into {requested} shards")]
    InvalidShardCount { requested: usize, records: usize },
    #[error("path '{0}' was returned by more than one shard")]
    DuplicatePath(String),
    #[error("all {} shards failed: {}", .0.len(), describe_failures(.0))]
    AllShardsFailed(Vec<ShardFailure>),
    #[error("invalid shard manifest: {0}")]
    Manifest(String),
    #[error("shard {shard_id} serves {actual}, expected {expected}")]
    ModelMismatch {
        shard_id: usize,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

fn describe_failures(failures: &[ShardFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("shard {}: {}", f.shard_id, f.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardFailure {
    pub shard_id: usize,
    pub reason: String,
}

/// Splits `index` into `n` shards: record `i` (in path order) goes to shard
/// `i % n`. Shard sizes differ by at most one.
pub fn split_index(index: &SearchIndex, n: usize) -> Result<Vec<SearchIndex>, ShardError> {
    if n == 0 || n > index.len() {
        return Err(ShardError::InvalidShardCount {
            requested: n,
            records: index.len(),
        });
    }
    let mut buckets: Vec<Vec<_>> = (0..n)
        .map(|s| Vec::with_capacity(index.len() / n + usize::from(s < index.len() % n)))
        .collect();
    for (i, record) in index.records().iter().enumerate() {
        buckets[i % n].push(record.clone());
    }
    buckets
        .into_iter()
        .map(|records| {
            SearchIndex::new(
                index.model().clone(),
                records,
                index.created_at().map(String::from),
            )
            .map_err(ShardError::from)
        })
        .collect()
}

/// Merges per-shard ranked lists into one ranking of at most `k` entries.
///
/// Each partial must already be in result order. Rank numbers in the input
/// are ignored and reassigned from 1.
pub fn merge_partials(
    partials: &[Vec<RankedResult>],
    k: usize,
) -> Result<Vec<RankedResult>, ShardError> {
    if k == 0 {
        return Err(SearchError::InvalidK.into());
    }
    let mut seen = HashSet::new();
    for r in partials.iter().flatten() {
        if !seen.insert(r.path.as_str()) {
            return Err(ShardError::DuplicatePath(r.path.clone()));
        }
    }

    let mut heap: BinaryHeap<Reverse<Head<'_>>> = partials
        .iter()
        .enumerate()
        .filter_map(|(list, p)| p.first().map(|r| Reverse(Head { r, list, pos: 0 })))
        .collect();
    let mut out = Vec::with_capacity(k.min(seen.len()));
    while out.len() < k {
        let Some(Reverse(head)) = heap.pop() else {
            break;
        };
        out.push(RankedResult {
            path: head.r.path.clone(),
            score: head.r.score,
            rank: out.len() + 1,
        });
        if let Some(next) = partials[head.list].get(head.pos + 1) {
            heap.push(Reverse(Head {
                r: next,
                list: head.list,
                pos: head.pos + 1,
            }));
        }
    }
    Ok(out)
}

struct Head<'a> {
    r: &'a RankedResult,
    list: usize,
    pos: usize,
}

impl Ord for Head<'_> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        rank_order(self.r.score, &self.r.path, other.r.score, &other.r.path)
    }
}

impl PartialOrd for Head<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Head<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Head<'_> {}

/// One instance holding part of the logical index.
pub trait ShardBackend: Send + Sync {
    fn model(&self) -> &ModelRef;

    fn record_count(&self) -> usize;

    /// Local top-k for an already embedded query.
    fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<RankedResult>, String>;

    /// Record paths, when the backend can list them cheaply.
    fn paths(&self) -> Option<Vec<String>> {
        None
    }
}

/// A shard held in this process.
#[derive(Debug, Clone)]
pub struct LocalShard {
    index: SearchIndex,
}

impl LocalShard {
    pub fn new(index: SearchIndex) -> Self {
        Self { index }
    }

    pub fn open(path: &Path) -> Result<Self, IndexError> {
        index::load_auto(path).map(Self::new)
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }
}

impl ShardBackend for LocalShard {
    fn model(&self) -> &ModelRef {
        self.index.model()
    }

    fn record_count(&self) -> usize {
        self.index.len()
    }

    fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<RankedResult>, String> {
        search::score_all(&self.index, query)
            .and_then(|scores| search::top_k(&scores, k))
            .map_err(|e| e.to_string())
    }

    fn paths(&self) -> Option<Vec<String>> {
        Some(self.index.paths().map(String::from).collect())
    }
}

/// Where a shard lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShardEndpoint {
    File(PathBuf),
    Http(String),
}

impl ShardEndpoint {
    /// Interprets a manifest endpoint. Relative file paths are taken
    /// relative to `base_dir`, normally the manifest's directory.
    pub fn parse(endpoint: &str, base_dir: &Path) -> Self {
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Self::Http(endpoint.trim_end_matches('/').to_string())
        } else {
            Self::File(base_dir.join(endpoint))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub id: usize,
    pub endpoint: String,
}

/// On-disk description of a sharded index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub format: String,
    pub version: u32,
    pub model_id: String,
    pub dimension: usize,
    pub shards: Vec<ShardEntry>,
}

impl ShardManifest {
    pub fn new(model: &ModelRef, endpoints: Vec<String>) -> Self {
        Self {
            format: MANIFEST_FORMAT_TAG.into(),
            version: MANIFEST_VERSION,
            model_id: model.model_id.clone(),
            dimension: model.dimension,
            shards: endpoints
                .into_iter()
                .enumerate()
                .map(|(id, endpoint)| ShardEntry { id, endpoint })
                .collect(),
        }
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn model(&self) -> Result<ModelRef, ShardError> {
        ModelRef::new(self.model_id.clone(), self.dimension)
            .map_err(|e| ShardError::Manifest(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ShardError> {
        if self.format != MANIFEST_FORMAT_TAG {
            return Err(ShardError::Manifest(format!(
                "format is '{}', expected '{MANIFEST_FORMAT_TAG}'",
                self.format
            )));
        }
        if self.version != MANIFEST_VERSION {
            return Err(ShardError::Manifest(format!(
                "unsupported version {}",
                self.version
            )));
        }
        self.model()?;
        if self.shards.is_empty() {
            return Err(ShardError::Manifest("no shards listed".into()));
        }
        let mut ids: Vec<usize> = self.shards.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.iter().enumerate().any(|(i, &id)| i != id) {
            return Err(ShardError::Manifest(format!(
                "shard ids must be 0..{} without gaps or repeats, got {ids:?}",
                self.shards.len()
            )));
        }
        if let Some(s) = self.shards.iter().find(|s| s.endpoint.is_empty()) {
            return Err(ShardError::Manifest(format!(
                "shard {} has no endpoint",
                s.id
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ShardError> {
        let bytes = fs::read(path).map_err(|e| IndexError::io(path, e))?;
        let manifest: Self = serde_json::from_slice(&bytes)
            .map_err(|e| ShardError::Manifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), ShardError> {
        let text = serde_json::to_vec_pretty(self).expect("manifest serialization cannot fail");
        index::write_atomically(path, &text)?;
        Ok(())
    }
}

/// Splits `index` into `n` CSIX files under `out_dir` and writes
/// `manifest.json` beside them. Returns the manifest path.
pub fn write_shards(index: &SearchIndex, n: usize, out_dir: &Path) -> Result<PathBuf, ShardError> {
    let parts = split_index(index, n)?;
    fs::create_dir_all(out_dir).map_err(|e| IndexError::io(out_dir, e))?;
    let mut endpoints = Vec::with_capacity(n);
    for (i, part) in parts.iter().enumerate() {
        let name = format!("shard-{i:03}.csix");
        index::save_binary(part, &out_dir.join(&name))?;
        endpoints.push(name);
    }
    let manifest_path = out_dir.join("manifest.json");
    ShardManifest::new(index.model(), endpoints).save(&manifest_path)?;
    Ok(manifest_path)
}

type ShardSlot = (usize, Result<Box<dyn ShardBackend>, String>);

/// The opened shards of a manifest. A shard that failed to open stays in the
/// set and is reported as failed on every query.
pub struct ShardSet {
    model: ModelRef,
    shards: Vec<ShardSlot>,
}

impl ShardSet {
    /// Checks that every opened shard serves `model`.
    pub fn new(model: ModelRef, mut shards: Vec<ShardSlot>) -> Result<Self, ShardError> {
        shards.sort_by_key(|(id, _)| *id);
        for (id, shard) in &shards {
            if let Ok(backend) = shard {
                if backend.model() != &model {
                    return Err(ShardError::ModelMismatch {
                        shard_id: *id,
                        expected: model.to_string(),
                        actual: backend.model().to_string(),
                    });
                }
            }
        }
        Ok(Self { model, shards })
    }

    /// In-process shards, numbered in order.
    pub fn from_local(parts: Vec<SearchIndex>) -> Result<Self, ShardError> {
        let model = parts
            .first()
            .map(|p| p.model().clone())
            .ok_or_else(|| ShardError::Manifest("no shards".into()))?;
        let shards = parts
            .into_iter()
            .enumerate()
            .map(|(id, p)| {
                (
                    id,
                    Ok(Box::new(LocalShard::new(p)) as Box<dyn ShardBackend>),
                )
            })
            .collect();
        Self::new(model, shards)
    }

    /// Opens every shard of a manifest. File endpoints are loaded here;
    /// HTTP endpoints are handed to `open_http`.
    pub fn open<F>(
        manifest: &ShardManifest,
        base_dir: &Path,
        open_http: F,
    ) -> Result<Self, ShardError>
    where
        F: Fn(&str) -> Result<Box<dyn ShardBackend>, String>,
    {
        manifest.validate()?;
        let shards = manifest
            .shards
            .iter()
            .map(|entry| {
                let backend = match ShardEndpoint::parse(&entry.endpoint, base_dir) {
                    ShardEndpoint::File(path) => LocalShard::open(&path)
                        .map(|s| Box::new(s) as Box<dyn ShardBackend>)
                        .map_err(|e| e.to_string()),
                    ShardEndpoint::Http(url) => open_http(&url),
                };
                (entry.id, backend)
            })
            .collect();
        Self::new(manifest.model()?, shards)
    }

    /// Opens a manifest containing only file endpoints.
    pub fn open_local(manifest_path: &Path) -> Result<Self, ShardError> {
        let manifest = ShardManifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        Self::open(&manifest, base, |url| {
            Err(format!("HTTP shard {url} needs an HTTP-capable opener"))
        })
    }

    pub fn model(&self) -> &ModelRef {
        &self.model
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    /// Records across all healthy shards.
    pub fn record_count(&self) -> usize {
        self.shards
            .iter()
            .filter_map(|(_, s)| s.as_ref().ok())
            .map(|s| s.record_count())
            .sum()
    }

    /// Paths of all shards that can list them.
    pub fn known_paths(&self) -> Vec<String> {
        self.shards
            .iter()
            .filter_map(|(_, s)| s.as_ref().ok())
            .filter_map(|s| s.paths())
            .flatten()
            .collect()
    }
}

/// Merged results plus the shards that did not contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterOutcome {
    pub results: Vec<RankedResult>,
    pub failed: Vec<ShardFailure>,
}

impl ScatterOutcome {
    pub fn is_degraded(&self) -> bool {
        !self.failed.is_empty()
    }

    pub fn failed_ids(&self) -> Vec<usize> {
        self.failed.iter().map(|f| f.shard_id).collect()
    }
}

/// Queries every shard with the same embedding and merges the answers.
pub fn scatter_embedding(
    set: &ShardSet,
    query: &Embedding,
    k: usize,
) -> Result<ScatterOutcome, ShardError> {
    if k == 0 {
        return Err(SearchError::InvalidK.into());
    }
    if query.len() != set.model.dimension {
        return Err(SearchError::DimensionMismatch {
            expected: set.model.dimension,
            actual: query.len(),
        }
        .into());
    }
    let run = |shard: &Result<Box<dyn ShardBackend>, String>| match shard {
        Ok(backend) => backend.top_k(query, k),
        Err(open_error) => Err(open_error.clone()),
    };
    let answers: Vec<(usize, Result<Vec<RankedResult>, String>)> = if set.shards.len() == 1 {
        set.shards.iter().map(|(id, s)| (*id, run(s))).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = set
                .shards
                .iter()
                .map(|(id, s)| (*id, scope.spawn(move || run(s))))
                .collect();
            handles
                .into_iter()
                .map(|(id, h)| {
                    let answer = h
                        .join()
                        .unwrap_or_else(|_| Err("shard worker panicked".to_string()));
                    (id, answer)
                })
                .collect()
        })
    };

    let mut partials = Vec::with_capacity(answers.len());
    let mut failed = Vec::new();
    for (shard_id, answer) in answers {
        match answer {
            Ok(list) => partials.push(list),
            Err(reason) => failed.push(ShardFailure { shard_id, reason }),
        }
    }
    if partials.is_empty() {
        return Err(ShardError::AllShardsFailed(failed));
    }
    Ok(ScatterOutcome {
        results: merge_partials(&partials, k)?,
        failed,
    })
}

/// Embeds `query` once and runs [`scatter_embedding`].
pub fn scatter_query(
    set: &ShardSet,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<ScatterOutcome, ShardError> {
    let descriptor = provider.descriptor();
    if !descriptor.matches(&set.model) {
        return Err(SearchError::ModelMismatch {
            query: descriptor.model_ref().to_string(),
            index: set.model.to_string(),
        }
        .into());
    }
    let q = provider.embed_text(query).map_err(SearchError::from)?;
    scatter_embedding(set, &q, k)
}
