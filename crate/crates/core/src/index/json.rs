//! JSON index format.
//!
//! ```json
//! {"format": "clipse-index", "version": 1, "model_id": "...", "dimension": 512,
//!  "created_at": "2024-01-01T00:00:00Z",
//!  "images": [{"path": "a.png", "embedding": [0.1, ...]}, ...]}
//! ```

use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{write_atomically, ImageRecord, IndexError, SearchIndex};
use crate::embedding::{Embedding, ModelRef};

pub const JSON_FORMAT_TAG: &str = "clipse-index";
pub const JSON_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct IndexOut<'a> {
    format: &'static str,
    version: u32,
    model_id: &'a str,
    dimension: usize,
    created_at: &'a str,
    images: Vec<ImageOut<'a>>,
}

#[derive(Serialize)]
struct ImageOut<'a> {
    path: &'a str,
    embedding: &'a [f32],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexIn {
    format: String,
    version: u32,
    model_id: String,
    dimension: usize,
    created_at: String,
    images: Vec<ImageIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageIn {
    path: String,
    embedding: Vec<f32>,
}

/// Serializes `index` to compact JSON. An index without a creation time is
/// stamped with the current time.
pub fn encode_json(index: &SearchIndex) -> Vec<u8> {
    let now;
    let created_at = match index.created_at() {
        Some(ts) => ts,
        None => {
            now = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
            &now
        }
    };
    let doc = IndexOut {
        format: JSON_FORMAT_TAG,
        version: JSON_FORMAT_VERSION,
        model_id: &index.model().model_id,
        dimension: index.dimension(),
        created_at,
        images: index
            .records()
            .iter()
            .map(|r| ImageOut {
                path: &r.path,
                embedding: r.embedding.as_slice(),
            })
            .collect(),
    };
    serde_json::to_vec(&doc).expect("index serialization cannot fail")
}

pub fn save_json(index: &SearchIndex, path: &Path) -> Result<(), IndexError> {
    write_atomically(path, &encode_json(index))
}

pub fn load_json(path: &Path) -> Result<SearchIndex, IndexError> {
    let bytes = fs::read(path).map_err(|e| IndexError::io(path, e))?;
    decode_json(&bytes).map_err(|e| IndexError::Format(format!("{}: {e}", path.display())))
}

pub fn decode_json(bytes: &[u8]) -> Result<SearchIndex, String> {
    let doc: IndexIn = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    if doc.format != JSON_FORMAT_TAG {
        return Err(format!(
            "format is '{}', expected '{JSON_FORMAT_TAG}'",
            doc.format
        ));
    }
    if doc.version != JSON_FORMAT_VERSION {
        return Err(format!(
            "unsupported version {}, expected {JSON_FORMAT_VERSION}",
            doc.version
        ));
    }
    DateTime::parse_from_rfc3339(&doc.created_at)
        .map_err(|e| format!("created_at '{}' is not RFC 3339: {e}", doc.created_at))?;
    let model = ModelRef::new(doc.model_id, doc.dimension).map_err(|e| e.to_string())?;
    let records = doc
        .images
        .into_iter()
        .enumerate()
        .map(|(i, img)| {
            Embedding::new(img.embedding)
                .map(|embedding| ImageRecord {
                    path: img.path,
                    embedding,
                })
                .map_err(|e| format!("images[{i}]: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    SearchIndex::from_sorted(model, records, Some(doc.created_at))
}
