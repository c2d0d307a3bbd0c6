//! Snapshot embeddings: unit-length 512-d vectors.
//!
//! Two backends produce them. The built-in spectral featurizer
//! ([`embed_baseline`]) needs nothing but the snapshot; the external client
//! ([`ExternalEmbedder`]) forwards the raw snapshot to a pre-trained encoder
//! served over HTTP.

mod baseline;
mod external;

use serde::Serialize;

use crate::{Error, Result};

pub use baseline::{channel_features, embed_baseline, projection_matrix, PROJECTION_SEED, PROJECTION_VERSION};
pub use external::{embed_external, EncodeRequest, EncodeResponse, EncoderEndpoint, EncoderHandle, ExternalEmbedder};

pub const EMBEDDING_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EmbeddingSource {
    Baseline,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub snapshot_id: u64,
    pub source: EmbeddingSource,
    vector: Vec<f32>,
}

impl Embedding {
    /// Normalizes `raw` to unit length. Rejects wrong dimensions, non-finite
    /// components and the zero vector.
    pub fn from_raw(snapshot_id: u64, raw: &[f64], source: EmbeddingSource) -> Result<Self> {
        if raw.len() != EMBEDDING_DIM {
            return Err(Error::Dimension {
                expected: EMBEDDING_DIM,
                received: raw.len(),
            });
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!("non-finite embedding component {i}")));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DataIntegrity(format!("embedding norm is {norm}")));
        }
        Ok(Embedding {
            snapshot_id,
            source,
            vector: raw.iter().map(|v| (v / norm) as f32).collect(),
        })
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}
