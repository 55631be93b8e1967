//! HTTP front end for a warm, in-memory search index.
//!
//! The index (or shard manifest) is loaded once, in the background, after
//! the listener is up; until then the API answers 503. After that every
//! request works from memory: the index file is never read again.
//!
//! Endpoints:
//!
//! - `GET /api/search?q=&page=&page_size=&k=`: ranked, paginated results
//! - `GET /api/health`: record count and model once loaded
//! - `GET /images/<path>`: image bytes, only for indexed paths
//! - `POST /api/shard/search`: local top-k for an embedded query, used by
//!   scatter-gather coordinators
//! - `GET /` and other paths: the web UI bundle

pub mod assets;
pub mod client;
pub mod config;
pub mod routes;
pub mod state;

use std::net::{SocketAddr, TcpListener as StdListener};
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use clipse_core::embedding::EmbeddingProvider;
use clipse_core::index;
use clipse_core::shard::{ShardManifest, ShardSet};
use thiserror::Error;
use tokio::sync::oneshot;

pub use config::{IndexSource, ServerConfig};
pub use routes::{router, SearchResponse};
pub use state::{AppState, Backend};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid server configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index failed to load: {0}")]
    Load(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads what `source` points at. Runs synchronously; call it off the
/// async runtime.
pub fn load_backend(source: &IndexSource) -> Result<Backend, String> {
    match source {
        IndexSource::Index(path) => {
            let path = config::preferred_index_file(path);
            log::info!("loading index {}", path.display());
            index::load_auto(&path)
                .map(Backend::Single)
                .map_err(|e| e.to_string())
        }
        IndexSource::Shards(path) => {
            log::info!("loading shard manifest {}", path.display());
            let manifest = ShardManifest::load(path).map_err(|e| e.to_string())?;
            let model = manifest.model().map_err(|e| e.to_string())?;
            let base = path.parent().unwrap_or(Path::new("."));
            ShardSet::open(&manifest, base, client::open_http_shard(&model))
                .map(Backend::sharded)
                .map_err(|e| e.to_string())
        }
    }
}

/// Loads `source` on a background thread and settles `state`.
pub fn spawn_loader(state: AppState, source: IndexSource) -> JoinHandle<()> {
    std::thread::spawn(move || match load_backend(&source) {
        Ok(backend) => {
            let records = backend.record_count();
            match state.set_ready(backend) {
                Ok(()) => log::info!("index ready: {records} records"),
                Err(e) => log::error!("{e}"),
            }
        }
        Err(e) => {
            log::error!("{e}");
            state.set_failed(e);
        }
    })
}

fn bind(addr: &str) -> Result<StdListener, ServerError> {
    let listener = StdListener::bind(addr).map_err(|source| ServerError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

fn runtime() -> Result<tokio::runtime::Runtime, ServerError> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

/// A server running on its own thread. Stops when dropped.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> Result<(), ServerError> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> Result<(), ServerError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(ServerError::Load("server thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}

/// Serves `state` on `bind_addr` from a background thread. Loading is up
/// to the caller (see [`spawn_loader`] and [`AppState::set_ready`]).
pub fn start(state: AppState, bind_addr: &str) -> Result<RunningServer, ServerError> {
    let listener = bind(bind_addr)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime()?.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await?;
            Ok(())
        })
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Runs the server in the foreground until Ctrl-C, or until loading fails.
pub fn run(config: ServerConfig, provider: Arc<dyn EmbeddingProvider>) -> Result<(), ServerError> {
    config.validate()?;
    let state = AppState::new(
        provider,
        config.images_root.clone(),
        config.default_page_size,
        config.web_root.clone(),
    );
    let listener = bind(&config.bind_address)?;
    log::info!("listening on http://{}", listener.local_addr()?);
    spawn_loader(state.clone(), config.source.clone());

    let watcher = state.clone();
    let failed = state.clone();
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async move {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = failed.inner.load_failed.notified() => {}
                }
            })
            .await?;
        Ok::<_, ServerError>(())
    })?;
    match watcher.load_error() {
        Some(e) => Err(ServerError::Load(e.to_string())),
        None => Ok(()),
    }
}
