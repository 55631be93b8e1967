//! The search index: one embedding per image, sorted by relative path.
//!
//! Two on-disk encodings exist. JSON is meant for humans and tooling; CSIX is
//! a flat little-endian binary layout that loads without any parsing beyond
//! length checks. Both are validated on load against the same invariants that
//! [`SearchIndex::new`] enforces on construction.

mod build;
mod csix;
mod json;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::embedding::{EmbedError, Embedding, ModelRef};

pub use build::{build_index, BuildOptions, BuildReport, SkipReason, SkippedFile};
pub use csix::{decode_csix, encode_csix, load_binary, save_binary, CSIX_MAGIC, CSIX_VERSION};
pub use json::{
    decode_json, encode_json, load_json, save_json, JSON_FORMAT_TAG, JSON_FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("image directory not found: {0}")]
    DirectoryNotFound(PathBuf),
    #[error("no images could be indexed ({skipped} skipped)")]
    EmptyIndex { skipped: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid index file: {0}")]
    Format(String),
    #[error("invalid index: {0}")]
    Invalid(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl IndexError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One indexed image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    /// Path relative to the image directory, `/`-separated.
    pub path: String,
    pub embedding: Embedding,
}

impl ImageRecord {
    pub fn new(path: impl Into<String>, embedding: Embedding) -> Self {
        Self {
            path: path.into(),
            embedding,
        }
    }
}

/// Checks that `path` is a clean relative `/`-separated path.
pub fn validate_record_path(path: &str) -> Result<(), String> {
    if path.is_empty() {
        return Err("path is empty".into());
    }
    if path.starts_with('/') {
        return Err(format!("path '{path}' is absolute"));
    }
    if path.contains('\\') {
        return Err(format!("path '{path}' contains a backslash"));
    }
    if path.chars().any(char::is_control) {
        return Err(format!("path {path:?} contains control characters"));
    }
    for segment in path.split('/') {
        match segment {
            "" => return Err(format!("path '{path}' has an empty segment")),
            "." | ".." => return Err(format!("path '{path}' has a '{segment}' segment")),
            _ => {}
        }
    }
    Ok(())
}

/// An immutable, validated set of image embeddings.
///
/// Invariants: at least one record, paths unique and valid, records in
/// ascending byte order of path, every embedding of length `model.dimension`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    model: ModelRef,
    created_at: Option<String>,
    records: Vec<ImageRecord>,
}

impl SearchIndex {
    /// Builds an index from records in any order.
    pub fn new(
        model: ModelRef,
        mut records: Vec<ImageRecord>,
        created_at: Option<String>,
    ) -> Result<Self, IndexError> {
        records.sort_by(|a, b| a.path.cmp(&b.path));
        Self::from_sorted(model, records, created_at).map_err(IndexError::Invalid)
    }

    /// Validates records that are expected to already be sorted.
    pub(crate) fn from_sorted(
        model: ModelRef,
        records: Vec<ImageRecord>,
        created_at: Option<String>,
    ) -> Result<Self, String> {
        crate::embedding::validate_model_id(&model.model_id).map_err(|e| e.to_string())?;
        if model.dimension == 0 {
            return Err("dimension must be at least 1".into());
        }
        if records.is_empty() {
            return Err("index has no records".into());
        }
        for (i, record) in records.iter().enumerate() {
            validate_record_path(&record.path).map_err(|e| format!("record {i}: {e}"))?;
            if record.embedding.len() != model.dimension {
                return Err(format!(
                    "record {i} ('{}'): embedding has {} components, index dimension is {}",
                    record.path,
                    record.embedding.len(),
                    model.dimension
                ));
            }
            if i > 0 {
                let prev = &records[i - 1].path;
                if *prev == record.path {
                    return Err(format!("record {i}: duplicate path '{}'", record.path));
                }
                if *prev > record.path {
                    return Err(format!(
                        "record {i}: path '{}' is not sorted after '{prev}'",
                        record.path
                    ));
                }
            }
        }
        Ok(Self {
            model,
            created_at,
            records,
        })
    }

    pub fn model(&self) -> &ModelRef {
        &self.model
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension
    }

    /// RFC 3339 creation time. CSIX does not store it, so indexes loaded from
    /// binary files have none.
    pub fn created_at(&self) -> Option<&str> {
        self.created_at.as_deref()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ImageRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.path.as_str())
    }

    pub fn contains_path(&self, path: &str) -> bool {
        self.records
            .binary_search_by(|r| r.path.as_str().cmp(path))
            .is_ok()
    }

    /// Equal model and records, ignoring the creation timestamp.
    pub fn same_content(&self, other: &SearchIndex) -> bool {
        self.model == other.model && self.records == other.records
    }
}

/// Loads either format, picking by the file's leading bytes.
pub fn load_auto(path: &Path) -> Result<SearchIndex, IndexError> {
    let bytes = fs::read(path).map_err(|e| IndexError::io(path, e))?;
    if bytes.starts_with(CSIX_MAGIC) {
        decode_csix(&bytes).map_err(|e| IndexError::Format(format!("{}: {e}", path.display())))
    } else {
        decode_json(&bytes).map_err(|e| IndexError::Format(format!("{}: {e}", path.display())))
    }
}

/// Reads only the model and dimension of an index file. For CSIX this
/// touches the header alone.
pub fn peek_model(path: &Path) -> Result<ModelRef, IndexError> {
    use std::io::Read;

    let fail = |m: String| IndexError::Format(format!("{}: {m}", path.display()));
    let mut file = fs::File::open(path).map_err(|e| IndexError::io(path, e))?;
    let mut head = [0u8; 24];
    let n = file.read(&mut head).map_err(|e| IndexError::io(path, e))?;
    if n >= 4 && &head[..4] == CSIX_MAGIC {
        let mut header = head[..n].to_vec();
        file.take(1 << 16)
            .read_to_end(&mut header)
            .map_err(|e| IndexError::io(path, e))?;
        return csix::decode_header(&header).map_err(fail);
    }
    #[derive(serde::Deserialize)]
    struct Head {
        model_id: String,
        dimension: usize,
    }
    let bytes = fs::read(path).map_err(|e| IndexError::io(path, e))?;
    let head: Head = serde_json::from_slice(&bytes).map_err(|e| fail(e.to_string()))?;
    ModelRef::new(head.model_id, head.dimension).map_err(|e| fail(e.to_string()))
}

/// Rewrites a JSON index as CSIX.
pub fn convert(json_path: &Path, binary_path: &Path) -> Result<(), IndexError> {
    let index = load_json(json_path)?;
    save_binary(&index, binary_path)
}

/// Writes `bytes` next to `path` and renames into place.
pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| IndexError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| IndexError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::reference_embed;

    fn model(d: usize) -> ModelRef {
        ModelRef::new("m", d).unwrap()
    }

    #[test]
    fn new_sorts_records() {
        let idx = SearchIndex::new(
            model(2),
            vec![
                ImageRecord::new("b.png", reference_embed(b"b", 2)),
                ImageRecord::new("a.png", reference_embed(b"a", 2)),
            ],
            None,
        )
        .unwrap();
        assert_eq!(idx.paths().collect::<Vec<_>>(), ["a.png", "b.png"]);
        assert!(idx.contains_path("b.png"));
        assert!(!idx.contains_path("c.png"));
    }

    #[test]
    fn new_rejects_duplicates_and_bad_dimension() {
        let dup = SearchIndex::new(
            model(2),
            vec![
                ImageRecord::new("a.png", reference_embed(b"1", 2)),
                ImageRecord::new("a.png", reference_embed(b"2", 2)),
            ],
            None,
        );
        assert!(matches!(dup, Err(IndexError::Invalid(m)) if m.contains("duplicate")));
        let dim = SearchIndex::new(
            model(3),
            vec![ImageRecord::new("a.png", reference_embed(b"1", 2))],
            None,
        );
        assert!(matches!(dim, Err(IndexError::Invalid(_))));
        assert!(SearchIndex::new(model(3), vec![], None).is_err());
    }

    #[test]
    fn record_paths() {
        for ok in ["a.png", "dir/sub/a.jpg", "..a.png", "a..b/c.png"] {
            assert!(validate_record_path(ok).is_ok(), "{ok}");
        }
        for bad in [
            "",
            "/etc/passwd",
            "../x.png",
            "a/../b.png",
            "a//b.png",
            "a\\b.png",
            "./a.png",
            "a/",
        ] {
            assert!(validate_record_path(bad).is_err(), "{bad}");
        }
    }
}
