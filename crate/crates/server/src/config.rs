use std::path::{Path, PathBuf};

use clipse_core::search::DEFAULT_PAGE_SIZE;

use crate::ServerError;

/// Environment variable that overrides the bind address.
pub const BIND_ENV: &str = "CLIPSE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// What the server answers queries from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSource {
    /// A single index file. A `.json` path with a `.csix` sibling loads the
    /// binary copy instead.
    Index(PathBuf),
    /// A shard manifest.
    Shards(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub source: IndexSource,
    pub images_root: PathBuf,
    pub bind_address: String,
    pub default_page_size: usize,
    /// Directory holding the web UI bundle; the built-in page is served
    /// when unset.
    pub web_root: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(source: IndexSource, images_root: impl Into<PathBuf>) -> Self {
        Self {
            source,
            images_root: images_root.into(),
            bind_address: DEFAULT_BIND.into(),
            default_page_size: DEFAULT_PAGE_SIZE,
            web_root: None,
        }
    }

    /// Builds a config from command-line style options: exactly one of
    /// `index` and `shards` must be given.
    pub fn from_options(
        index: Option<PathBuf>,
        shards: Option<PathBuf>,
        images_root: PathBuf,
        bind: Option<String>,
        page_size: usize,
        web_root: Option<PathBuf>,
    ) -> Result<Self, ServerError> {
        let source = match (index, shards) {
            (Some(p), None) => IndexSource::Index(p),
            (None, Some(p)) => IndexSource::Shards(p),
            _ => {
                return Err(ServerError::Config(
                    "exactly one of --index and --shards must be given".into(),
                ))
            }
        };
        let config = Self {
            source,
            images_root,
            bind_address: resolve_bind(bind.as_deref(), std::env::var(BIND_ENV).ok()),
            default_page_size: page_size,
            web_root,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.default_page_size == 0 {
            return Err(ServerError::Config("page size must be at least 1".into()));
        }
        if self.bind_address.is_empty() {
            return Err(ServerError::Config("bind address is empty".into()));
        }
        Ok(())
    }
}

/// `CLIPSE_BIND` wins over the command line, which wins over the default.
pub fn resolve_bind(cli: Option<&str>, env: Option<String>) -> String {
    env.filter(|v| !v.trim().is_empty())
        .or_else(|| cli.map(String::from))
        .unwrap_or_else(|| DEFAULT_BIND.to_string())
}

/// Picks the binary sibling of a JSON index when one exists.
pub fn preferred_index_file(path: &Path) -> PathBuf {
    let is_json = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    if is_json {
        let binary = path.with_extension("csix");
        if binary.is_file() {
            return binary;
        }
    }
    path.to_path_buf()
}
