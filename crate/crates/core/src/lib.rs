//! Self-hosted text-to-image search.
//!
//! Images are embedded once into a [`SearchIndex`]; a text query is embedded
//! into the same space and every image is ranked by dot product. The index
//! persists as JSON or as the flat CSIX binary format, can be split into
//! shards queried by scatter-gather, and comes with the benchmark harness
//! used to measure indexing and query latency.

pub mod bench;
pub mod embedding;
pub mod index;
pub mod search;
pub mod shard;

pub use embedding::{
    l2_normalize, reference_embed, EmbedError, Embedding, EmbeddingProvider, ModelRef,
    ProviderDescriptor, ReferenceEmbedder,
};
pub use index::{BuildOptions, BuildReport, ImageRecord, IndexError, SearchIndex};
pub use search::{paginate, score_all, similarity, top_k, Page, RankedResult, Scored, SearchError};
pub use shard::{
    merge_partials, scatter_query, split_index, ScatterOutcome, ShardError, ShardManifest, ShardSet,
};
