//! Exhaustive dot-product ranking.
//!
//! Every query is scored against every record. Scores are plain dot products
//! of `f32` components, each product widened to `f64` and summed in index
//! order, so results are reproducible bit for bit.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedding, EmbeddingProvider};
use crate::index::SearchIndex;

pub const DEFAULT_PAGE_SIZE: usize = 20;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("page and page_size must be at least 1 (got page={page}, page_size={page_size})")]
    InvalidPage { page: usize, page_size: usize },
    #[error("query model {query} does not match index model {index}")]
    ModelMismatch { query: String, index: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub path: String,
    pub score: f64,
    /// 1-based position in the full ranking.
    pub rank: usize,
}

/// A record's score before ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored<'a> {
    pub path: &'a str,
    pub score: f64,
}

impl<'a> Scored<'a> {
    pub fn new(path: &'a str, score: f64) -> Self {
        Self { path, score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub results: Vec<RankedResult>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

/// Result order: higher score first, then ascending path.
pub fn rank_order(a_score: f64, a_path: &str, b_score: f64, b_path: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_path.cmp(b_path))
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut sum = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        sum += f64::from(x) * f64::from(y);
    }
    sum
}

/// Dot product of two equal-length vectors.
pub fn similarity(a: &Embedding, b: &Embedding) -> Result<f64, SearchError> {
    if a.len() != b.len() {
        return Err(SearchError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

const LANES: usize = 8;

/// Scores `query` against every record, in index order.
pub fn score_all<'a>(
    index: &'a SearchIndex,
    query: &Embedding,
) -> Result<Vec<Scored<'a>>, SearchError> {
    if query.len() != index.dimension() {
        return Err(SearchError::DimensionMismatch {
            expected: index.dimension(),
            actual: query.len(),
        });
    }
    let q = query.as_slice();
    let records = index.records();
    let mut out = Vec::with_capacity(records.len());

    // Eight records at a time: independent accumulators keep the FPU busy
    // while each record's sum still runs in component order.
    let mut chunks = records.chunks_exact(LANES);
    for chunk in &mut chunks {
        let rows: [&[f32]; LANES] = std::array::from_fn(|l| chunk[l].embedding.as_slice());
        let mut acc = [0.0f64; LANES];
        for (j, &qj) in q.iter().enumerate() {
            let qj = f64::from(qj);
            for l in 0..LANES {
                acc[l] += qj * f64::from(rows[l][j]);
            }
        }
        out.extend(
            chunk
                .iter()
                .zip(acc)
                .map(|(r, score)| Scored::new(&r.path, score)),
        );
    }
    out.extend(
        chunks
            .remainder()
            .iter()
            .map(|r| Scored::new(&r.path, dot(q, r.embedding.as_slice()))),
    );
    Ok(out)
}

/// The `k` best entries, ranked 1..=k. `k` larger than the input is clamped.
pub fn top_k(scores: &[Scored<'_>], k: usize) -> Result<Vec<RankedResult>, SearchError> {
    if k == 0 {
        return Err(SearchError::InvalidK);
    }
    let k = k.min(scores.len());
    let cmp = |a: &Scored<'_>, b: &Scored<'_>| rank_order(a.score, a.path, b.score, b.path);
    let mut work = scores.to_vec();
    if k < work.len() {
        work.select_nth_unstable_by(k - 1, cmp);
        work.truncate(k);
    }
    work.sort_unstable_by(cmp);
    Ok(work
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankedResult {
            path: s.path.to_string(),
            score: s.score,
            rank: i + 1,
        })
        .collect())
}

/// Slices one page out of a ranked list. Pages past the end are empty.
pub fn paginate(
    results: &[RankedResult],
    page: usize,
    page_size: usize,
) -> Result<Page, SearchError> {
    if page == 0 || page_size == 0 {
        return Err(SearchError::InvalidPage { page, page_size });
    }
    let start = (page - 1).saturating_mul(page_size).min(results.len());
    let end = start.saturating_add(page_size).min(results.len());
    Ok(Page {
        results: results[start..end].to_vec(),
        page,
        page_size,
        total: results.len(),
    })
}

/// Embeds `query` and ranks the whole index, keeping the best `k`
/// (all records when `k` is `None`).
pub fn search_text(
    index: &SearchIndex,
    provider: &dyn EmbeddingProvider,
    query: &str,
    k: Option<usize>,
) -> Result<Vec<RankedResult>, SearchError> {
    let descriptor = provider.descriptor();
    if !descriptor.matches(index.model()) {
        return Err(SearchError::ModelMismatch {
            query: descriptor.model_ref().to_string(),
            index: index.model().to_string(),
        });
    }
    let q = provider.embed_text(query)?;
    let scores = score_all(index, &q)?;
    top_k(&scores, k.unwrap_or(index.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{reference_embed, ModelRef};
    use crate::index::ImageRecord;

    fn e(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn ranked(path: &str, score: f64, rank: usize) -> RankedResult {
        RankedResult {
            path: path.into(),
            score,
            rank,
        }
    }

    fn index(n: usize, d: usize) -> SearchIndex {
        SearchIndex::new(
            ModelRef::new("m", d).unwrap(),
            (0..n)
                .map(|i| ImageRecord::new(format!("{i:03}.png"), reference_embed(&[i as u8], d)))
                .collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 0.0);
        let u = reference_embed(b"u", 64);
        assert!((similarity(&u, &u).unwrap() - 1.0).abs() < 1e-6);
        let s = similarity(&e(&[0.6, 0.8]), &e(&[0.8, 0.6])).unwrap();
        assert!((s - 0.96).abs() < 1e-7);
        assert!(matches!(
            similarity(&e(&[1.0]), &e(&[1.0, 2.0])),
            Err(SearchError::DimensionMismatch {
                expected: 1,
                actual: 2
            })
        ));
    }

    #[test]
    fn score_all_counts_and_zero_query() {
        let idx = index(3, 4);
        let scores = score_all(&idx, &e(&[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(scores.len(), 3);
        let zeros = score_all(&idx, &e(&[0.0; 4])).unwrap();
        assert!(zeros.iter().all(|s| s.score == 0.0));
        assert!(score_all(&idx, &e(&[1.0; 3])).is_err());
    }

    #[test]
    fn score_all_matches_pairwise_similarity() {
        // 19 records exercises both the 8-lane kernel and the remainder.
        let idx = index(19, 7);
        let q = reference_embed(b"q", 7);
        let scores = score_all(&idx, &q).unwrap();
        for (s, r) in scores.iter().zip(idx.records()) {
            assert_eq!(s.path, r.path);
            assert_eq!(s.score, similarity(&q, &r.embedding).unwrap());
        }
    }

    #[test]
    fn top_k_examples() {
        let scores = [
            Scored::new("a", 0.2),
            Scored::new("b", 0.9),
            Scored::new("c", 0.5),
        ];
        assert_eq!(
            top_k(&scores, 2).unwrap(),
            vec![ranked("b", 0.9, 1), ranked("c", 0.5, 2)]
        );
        let ties = [Scored::new("z", 0.7), Scored::new("a", 0.7)];
        assert_eq!(
            top_k(&ties, 2).unwrap(),
            vec![ranked("a", 0.7, 1), ranked("z", 0.7, 2)]
        );
        assert_eq!(top_k(&scores, 99).unwrap().len(), 3);
        assert!(matches!(top_k(&scores, 0), Err(SearchError::InvalidK)));
    }

    #[test]
    fn pagination_examples() {
        let results: Vec<_> = (1..=5).map(|r| ranked(&r.to_string(), 1.0, r)).collect();
        let p = paginate(&results, 1, 2).unwrap();
        assert_eq!(p.results.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(p.total, 5);
        let p = paginate(&results, 3, 2).unwrap();
        assert_eq!(p.results.iter().map(|r| r.rank).collect::<Vec<_>>(), [5]);
        let p = paginate(&results, 9, 2).unwrap();
        assert!(p.results.is_empty());
        assert_eq!(p.total, 5);
        assert!(paginate(&results, 0, 2).is_err());
        assert!(paginate(&results, 1, 0).is_err());
        assert!(paginate(&results, usize::MAX, usize::MAX)
            .unwrap()
            .results
            .is_empty());
    }

    #[test]
    fn search_text_checks_model() {
        let idx = index(5, 8);
        let wrong = crate::embedding::ReferenceEmbedder::new(8).unwrap();
        assert!(matches!(
            search_text(&idx, &wrong, "q", None),
            Err(SearchError::ModelMismatch { .. })
        ));
    }
}
