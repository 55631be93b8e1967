use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use walkdir::WalkDir;

use super::{validate_record_path, ImageRecord, IndexError, SearchIndex};
use crate::embedding::{EmbedError, EmbeddingProvider};

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub follow_symlinks: bool,
    /// Lower-case suffixes without the leading dot.
    pub extensions: BTreeSet<String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            follow_symlinks: false,
            extensions: ["png", "jpg", "jpeg", "webp"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl BuildOptions {
    /// Replaces the extension set. Accepts `.PNG`, `png`, etc.
    pub fn with_extensions<I, S>(mut self, extensions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.extensions = extensions
            .into_iter()
            .map(|e| e.as_ref().trim_start_matches('.').to_ascii_lowercase())
            .filter(|e| !e.is_empty())
            .collect();
        self
    }

    fn accepts(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| self.extensions.contains(&e.to_ascii_lowercase()))
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    Walk(String),
    InvalidPath(String),
    Read(String),
    Decode(String),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::Walk(e) => write!(f, "directory walk error: {e}"),
            SkipReason::InvalidPath(e) => write!(f, "invalid path: {e}"),
            SkipReason::Read(e) => write!(f, "read error: {e}"),
            SkipReason::Decode(e) => write!(f, "decode error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFile {
    pub path: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub indexed_count: usize,
    pub skipped: Vec<SkippedFile>,
    pub elapsed_seconds: f64,
}

impl BuildReport {
    pub fn per_image_seconds(&self) -> Option<f64> {
        (self.indexed_count > 0).then(|| self.elapsed_seconds / self.indexed_count as f64)
    }
}

impl fmt::Display for BuildReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} indexed, {} skipped in {:.3} s",
            self.indexed_count,
            self.skipped.len(),
            self.elapsed_seconds
        )?;
        if let Some(per_image) = self.per_image_seconds() {
            write!(f, " ({per_image:.3} s per image)")?;
        }
        Ok(())
    }
}

/// Embeds every matching image under `image_dir`, one at a time.
///
/// Files that cannot be read or decoded are reported in
/// [`BuildReport::skipped`]; only a provider failure aborts the build.
pub fn build_index(
    image_dir: &Path,
    provider: &dyn EmbeddingProvider,
    options: &BuildOptions,
) -> Result<(SearchIndex, BuildReport), IndexError> {
    let start = Instant::now();
    if !image_dir.is_dir() {
        return Err(IndexError::DirectoryNotFound(image_dir.to_path_buf()));
    }
    let descriptor = provider.descriptor();
    let mut skipped = Vec::new();
    let mut candidates = Vec::new();

    for entry in WalkDir::new(image_dir).follow_links(options.follow_symlinks) {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                let path = e
                    .path()
                    .and_then(|p| p.strip_prefix(image_dir).ok())
                    .map(|p| p.to_string_lossy().into_owned())
                    .unwrap_or_default();
                skipped.push(SkippedFile {
                    path,
                    reason: SkipReason::Walk(e.to_string()),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() || !options.accepts(entry.path()) {
            continue;
        }
        let relative = entry
            .path()
            .strip_prefix(image_dir)
            .expect("walkdir yields paths under its root");
        let parts: Option<Vec<&str>> = relative.iter().map(|c| c.to_str()).collect();
        let Some(parts) = parts else {
            skipped.push(SkippedFile {
                path: relative.to_string_lossy().into_owned(),
                reason: SkipReason::InvalidPath("not valid UTF-8".into()),
            });
            continue;
        };
        let rel = parts.join("/");
        if let Err(e) = validate_record_path(&rel) {
            skipped.push(SkippedFile {
                path: rel,
                reason: SkipReason::InvalidPath(e),
            });
            continue;
        }
        candidates.push((rel, entry.into_path()));
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0));

    let mut records = Vec::with_capacity(candidates.len());
    for (rel, full) in candidates {
        let bytes = match fs::read(&full) {
            Ok(bytes) => bytes,
            Err(e) => {
                skipped.push(SkippedFile {
                    path: rel,
                    reason: SkipReason::Read(e.to_string()),
                });
                continue;
            }
        };
        match provider.embed_image(&bytes) {
            Ok(embedding) if embedding.len() == descriptor.dimension => {
                records.push(ImageRecord {
                    path: rel,
                    embedding,
                });
            }
            Ok(embedding) => {
                return Err(EmbedError::Provider(format!(
                    "provider declared dimension {} but returned {} for '{rel}'",
                    descriptor.dimension,
                    embedding.len()
                ))
                .into())
            }
            Err(EmbedError::Decode(e)) => skipped.push(SkippedFile {
                path: rel,
                reason: SkipReason::Decode(e),
            }),
            Err(e) => return Err(e.into()),
        }
    }

    if records.is_empty() {
        return Err(IndexError::EmptyIndex {
            skipped: skipped.len(),
        });
    }
    let created_at = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
    let index = SearchIndex::from_sorted(descriptor.model_ref(), records, Some(created_at))
        .map_err(IndexError::Invalid)?;
    let report = BuildReport {
        indexed_count: index.len(),
        skipped,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((index, report))
}
