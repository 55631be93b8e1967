//! Embedding providers.
//!
//! A provider maps encoded images and free text into one shared vector space.
//! Ranking later takes the plain dot product of a text vector with every image
//! vector, so a provider that declares `normalize` must emit unit vectors.
//!
//! [`ReferenceEmbedder`] is a deterministic stand-in for a real
//! vision-language model: it hashes the input bytes and expands the digest
//! into a unit vector. It carries no semantics, but it lets the rest of the
//! system be built, tested and benchmarked without an ML runtime.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Model identifier used by [`ReferenceEmbedder`].
pub const REFERENCE_MODEL_ID: &str = "reference/sha256-chacha20-normal";

/// Default dimension for the reference embedder.
pub const DEFAULT_DIMENSION: usize = 512;

const ZERO_NORM_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("cannot normalize a vector with norm below {ZERO_NORM_THRESHOLD:e}")]
    ZeroVector,
    #[error("embedding must have at least one component")]
    Empty,
    #[error("embedding component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f32 },
    #[error("invalid provider descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown embedder '{0}' (available: reference)")]
    UnknownProvider(String),
}

/// A finite, non-empty vector in the shared embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EmbedError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Euclidean norm, accumulated in `f64`.
    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self, EmbedError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = EmbedError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Identifies the vector space an index lives in: which model produced the
/// embeddings and how long they are. Both index formats persist exactly this.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelRef {
    pub model_id: String,
    pub dimension: usize,
}

impl ModelRef {
    pub fn new(model_id: impl Into<String>, dimension: usize) -> Result<Self, EmbedError> {
        let model_id = model_id.into();
        validate_model_id(&model_id)?;
        if dimension == 0 {
            return Err(EmbedError::InvalidDescriptor(
                "dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            model_id,
            dimension,
        })
    }
}

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (D={})", self.model_id, self.dimension)
    }
}

pub(crate) fn validate_model_id(model_id: &str) -> Result<(), EmbedError> {
    if model_id.is_empty() {
        return Err(EmbedError::InvalidDescriptor("model_id is empty".into()));
    }
    if model_id.chars().any(char::is_control) {
        return Err(EmbedError::InvalidDescriptor(
            "model_id contains control characters".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub model_id: String,
    pub dimension: usize,
    /// Whether every emitted vector has unit L2 norm.
    pub normalize: bool,
}

impl ProviderDescriptor {
    pub fn new(
        model_id: impl Into<String>,
        dimension: usize,
        normalize: bool,
    ) -> Result<Self, EmbedError> {
        let ModelRef {
            model_id,
            dimension,
        } = ModelRef::new(model_id, dimension)?;
        Ok(Self {
            model_id,
            dimension,
            normalize,
        })
    }

    pub fn model_ref(&self) -> ModelRef {
        ModelRef {
            model_id: self.model_id.clone(),
            dimension: self.dimension,
        }
    }

    pub fn matches(&self, model: &ModelRef) -> bool {
        self.model_id == model.model_id && self.dimension == model.dimension
    }
}

/// Turns images and text into vectors of one shared space.
///
/// Implementations must be pure functions of their input and safe to call
/// from several threads at once; a backend that is not must put itself
/// behind a lock.
pub trait EmbeddingProvider: Send + Sync {
    fn descriptor(&self) -> &ProviderDescriptor;

    /// Embeds an encoded image. Returns [`EmbedError::Decode`] for bytes that
    /// are not a supported raster image; callers skip such files.
    fn embed_image(&self, image_bytes: &[u8]) -> Result<Embedding, EmbedError>;

    /// Embeds a text query. The empty string is a valid query.
    fn embed_text(&self, query: &str) -> Result<Embedding, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn descriptor(&self) -> &ProviderDescriptor {
        (**self).descriptor()
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Embedding, EmbedError> {
        (**self).embed_image(image_bytes)
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, EmbedError> {
        (**self).embed_text(query)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn descriptor(&self) -> &ProviderDescriptor {
        (**self).descriptor()
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Embedding, EmbedError> {
        (**self).embed_image(image_bytes)
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, EmbedError> {
        (**self).embed_text(query)
    }
}

/// Deterministic hash-expansion embedding of arbitrary bytes.
///
/// The SHA-256 digest of `bytes` seeds a ChaCha20 stream, which yields
/// `dimension` standard-normal samples. The result is scaled to unit length,
/// which makes its direction uniform on the sphere.
pub fn reference_embed(bytes: &[u8], dimension: usize) -> Embedding {
    assert!(dimension >= 1, "dimension must be at least 1");
    let seed: [u8; 32] = Sha256::digest(bytes).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut raw: Vec<f64> = (0..dimension)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < ZERO_NORM_THRESHOLD {
        // Practically unreachable; keep the output a unit vector regardless.
        raw.iter_mut().for_each(|v| *v = 0.0);
        raw[0] = 1.0;
    } else {
        raw.iter_mut().for_each(|v| *v /= norm);
    }
    Embedding(raw.into_iter().map(|v| v as f32).collect())
}

/// Rescales `v` to unit L2 norm.
pub fn l2_normalize(v: &Embedding) -> Result<Embedding, EmbedError> {
    let norm = v.norm();
    if norm < ZERO_NORM_THRESHOLD {
        return Err(EmbedError::ZeroVector);
    }
    Embedding::new(v.0.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// Stateless provider backed by [`reference_embed`].
///
/// Images are fully decoded before hashing so that corrupt or unsupported
/// files are reported the same way a real model would report them. The hash
/// covers the encoded bytes, not the pixels.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    descriptor: ProviderDescriptor,
}

impl ReferenceEmbedder {
    pub fn new(dimension: usize) -> Result<Self, EmbedError> {
        Ok(Self {
            descriptor: ProviderDescriptor::new(REFERENCE_MODEL_ID, dimension, true)?,
        })
    }
}

impl EmbeddingProvider for ReferenceEmbedder {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Embedding, EmbedError> {
        image::load_from_memory(image_bytes).map_err(|e| EmbedError::Decode(e.to_string()))?;
        Ok(reference_embed(image_bytes, self.descriptor.dimension))
    }

    fn embed_text(&self, query: &str) -> Result<Embedding, EmbedError> {
        Ok(reference_embed(query.as_bytes(), self.descriptor.dimension))
    }
}

/// Looks up a provider by its command-line name.
pub fn provider_by_name(
    name: &str,
    dimension: usize,
) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
    match name {
        "reference" => Ok(Box::new(ReferenceEmbedder::new(dimension)?)),
        other => Err(EmbedError::UnknownProvider(other.to_string())),
    }
}
