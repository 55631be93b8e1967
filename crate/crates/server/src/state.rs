use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use clipse_core::embedding::{EmbeddingProvider, ModelRef};
use clipse_core::search::{self, RankedResult};
use clipse_core::shard::{self, ShardSet};
use clipse_core::{Embedding, SearchIndex};
use tokio::sync::Notify;

/// The loaded, immutable data a server answers from.
pub enum Backend {
    Single(SearchIndex),
    Sharded {
        set: ShardSet,
        /// Image whitelist: paths of shards that can list them.
        paths: HashSet<String>,
    },
}

/// Ranked results plus the shards that failed to answer.
#[derive(Debug)]
pub struct Ranking {
    pub results: Vec<RankedResult>,
    pub degraded: Option<Vec<usize>>,
}

impl Backend {
    pub fn sharded(set: ShardSet) -> Self {
        let paths = set.known_paths().into_iter().collect();
        Self::Sharded { set, paths }
    }

    pub fn model(&self) -> &ModelRef {
        match self {
            Backend::Single(index) => index.model(),
            Backend::Sharded { set, .. } => set.model(),
        }
    }

    pub fn record_count(&self) -> usize {
        match self {
            Backend::Single(index) => index.len(),
            Backend::Sharded { set, .. } => set.record_count(),
        }
    }

    pub fn serves_image(&self, path: &str) -> bool {
        match self {
            Backend::Single(index) => index.contains_path(path),
            Backend::Sharded { paths, .. } => paths.contains(path),
        }
    }

    /// Ranks an embedded query; `k = None` ranks every record.
    pub fn rank(&self, query: &Embedding, k: Option<usize>) -> Result<Ranking, String> {
        let k = k.unwrap_or_else(|| self.record_count()).max(1);
        match self {
            Backend::Single(index) => {
                let scores = search::score_all(index, query).map_err(|e| e.to_string())?;
                let results = search::top_k(&scores, k).map_err(|e| e.to_string())?;
                Ok(Ranking {
                    results,
                    degraded: None,
                })
            }
            Backend::Sharded { set, .. } => {
                let outcome = shard::scatter_embedding(set, query, k).map_err(|e| e.to_string())?;
                let degraded = outcome.is_degraded().then(|| outcome.failed_ids());
                Ok(Ranking {
                    results: outcome.results,
                    degraded,
                })
            }
        }
    }
}

pub(crate) enum LoadState {
    Ready(Backend),
    Failed(String),
}

pub(crate) struct Inner {
    pub(crate) load: OnceLock<LoadState>,
    pub(crate) load_failed: Notify,
    pub(crate) provider: Arc<dyn EmbeddingProvider>,
    pub(crate) images_root: PathBuf,
    pub(crate) default_page_size: usize,
    pub(crate) web_root: Option<PathBuf>,
}

/// Shared server state. Starts in the loading state; becomes ready exactly
/// once and never changes afterwards.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    pub fn new(
        provider: Arc<dyn EmbeddingProvider>,
        images_root: PathBuf,
        default_page_size: usize,
        web_root: Option<PathBuf>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                load: OnceLock::new(),
                load_failed: Notify::new(),
                provider,
                images_root,
                default_page_size: default_page_size.max(1),
                web_root,
            }),
        }
    }

    /// Installs the loaded backend. Fails if it does not match the provider
    /// or if the state was already settled.
    pub fn set_ready(&self, backend: Backend) -> Result<(), String> {
        let descriptor = self.inner.provider.descriptor();
        if !descriptor.matches(backend.model()) {
            let msg = format!(
                "index model {} does not match embedder {}",
                backend.model(),
                descriptor.model_ref()
            );
            self.set_failed(msg.clone());
            return Err(msg);
        }
        self.inner
            .load
            .set(LoadState::Ready(backend))
            .map_err(|_| "index already loaded".to_string())
    }

    pub fn set_failed(&self, message: String) {
        if self.inner.load.set(LoadState::Failed(message)).is_ok() {
            self.inner.load_failed.notify_waiters();
            self.inner.load_failed.notify_one();
        }
    }

    pub fn backend(&self) -> Option<&Backend> {
        match self.inner.load.get() {
            Some(LoadState::Ready(b)) => Some(b),
            _ => None,
        }
    }

    pub fn load_error(&self) -> Option<&str> {
        match self.inner.load.get() {
            Some(LoadState::Failed(m)) => Some(m),
            _ => None,
        }
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.inner.provider
    }
}
