//! CSIX binary index format.
//!
//! ```text
//! magic         4 bytes  "CSIX"
//! version       u32      1
//! dimension     u32
//! record_count  u64
//! model_id_len  u32
//! model_id      model_id_len bytes, UTF-8
//! record_count times:
//!   path_len    u32
//!   path        path_len bytes, UTF-8
//!   embedding   dimension x f32
//! ```
//!
//! All integers and floats are little-endian; there is no padding and no
//! trailing data.

use std::fs;
use std::path::Path;

use super::{write_atomically, ImageRecord, IndexError, SearchIndex};
use crate::embedding::{Embedding, ModelRef};

pub const CSIX_MAGIC: &[u8; 4] = b"CSIX";
pub const CSIX_VERSION: u32 = 1;

/// Serializes `index` to CSIX bytes.
pub fn encode_csix(index: &SearchIndex) -> Vec<u8> {
    let model = index.model();
    let dim = model.dimension;
    let body: usize = index
        .records()
        .iter()
        .map(|r| 4 + r.path.len() + 4 * dim)
        .sum();
    let mut out = Vec::with_capacity(24 + model.model_id.len() + body);
    out.extend_from_slice(CSIX_MAGIC);
    out.extend_from_slice(&CSIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.extend_from_slice(&(model.model_id.len() as u32).to_le_bytes());
    out.extend_from_slice(model.model_id.as_bytes());
    for record in index.records() {
        out.extend_from_slice(&(record.path.len() as u32).to_le_bytes());
        out.extend_from_slice(record.path.as_bytes());
        for v in record.embedding.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_binary(index: &SearchIndex, path: &Path) -> Result<(), IndexError> {
    write_atomically(path, &encode_csix(index))
}

pub fn load_binary(path: &Path) -> Result<SearchIndex, IndexError> {
    let bytes = fs::read(path).map_err(|e| IndexError::io(path, e))?;
    decode_csix(&bytes).map_err(|e| IndexError::Format(format!("{}: {e}", path.display())))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(format!(
                "truncated at offset {}: expected {n} bytes for {what}, only {available} available",
                self.pos
            ));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<&'a str, String> {
        let at = self.pos;
        std::str::from_utf8(self.take(n, what)?)
            .map_err(|e| format!("{what} at offset {at} is not UTF-8: {e}"))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<(ModelRef, u64), String> {
    let magic = r.take(4, "magic")?;
    if magic != CSIX_MAGIC {
        return Err(format!("bad magic {magic:02x?}, expected \"CSIX\""));
    }
    let version = r.u32("version")?;
    if version != CSIX_VERSION {
        return Err(format!(
            "unsupported version {version}, expected {CSIX_VERSION}"
        ));
    }
    let dimension = r.u32("dimension")? as usize;
    let count = r.u64("record_count")?;
    let id_len = r.u32("model_id_len")? as usize;
    let model_id = r.utf8(id_len, "model_id")?.to_string();
    let model = ModelRef::new(model_id, dimension).map_err(|e| e.to_string())?;
    Ok((model, count))
}

/// Parses the header up to and including the model id.
pub(crate) fn decode_header(bytes: &[u8]) -> Result<ModelRef, String> {
    read_header(&mut Reader { buf: bytes, pos: 0 }).map(|(model, _)| model)
}

/// Parses and validates CSIX bytes. Errors carry a byte offset.
pub fn decode_csix(bytes: &[u8]) -> Result<SearchIndex, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (model, count) = read_header(&mut r)?;
    let dimension = model.dimension;
    if count == 0 {
        return Err("index has no records".into());
    }

    let min_record = 4 + 4 * dimension;
    let capacity = usize::try_from(count)
        .unwrap_or(usize::MAX)
        .min((bytes.len() - r.pos) / min_record);
    let mut records = Vec::with_capacity(capacity);
    for i in 0..count {
        let path_len = r.u32("path_len")? as usize;
        let path = r.utf8(path_len, "path")?.to_string();
        let at = r.pos;
        let raw = r.take(4 * dimension, "embedding")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let embedding = Embedding::new(values)
            .map_err(|e| format!("record {i} embedding at offset {at}: {e}"))?;
        records.push(ImageRecord { path, embedding });
    }
    if r.pos != bytes.len() {
        return Err(format!(
            "{} trailing bytes after the last record at offset {}",
            bytes.len() - r.pos,
            r.pos
        ));
    }
    SearchIndex::from_sorted(model, records, None)
}
