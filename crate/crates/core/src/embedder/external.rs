//! Client for a pre-trained encoder reached over HTTP.
//!
//! Wire format, request:
//! `{"snapshot_id": u64, "shape": [1024, 34], "data": base64(LE f32, row-major by channel)}`
//! and response: `{"vector": [512 numbers]}`.

use std::path::PathBuf;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingSource, EMBEDDING_DIM};
use crate::http::{parse_lenient, JsonClient};
use crate::signalgen::{Snapshot, CELLS, CHANNELS, TIME_BINS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderEndpoint {
    Url(String),
    /// Interchange-format graph exported next to its JSON manifest.
    ModelPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderHandle {
    pub endpoint: EncoderEndpoint,
    /// Output dimension the encoder declares; must be 512.
    pub dimension: usize,
    pub timeout_ms: u64,
}

impl EncoderHandle {
    pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

    pub fn url(url: impl Into<String>) -> Self {
        EncoderHandle {
            endpoint: EncoderEndpoint::Url(url.into()),
            dimension: EMBEDDING_DIM,
            timeout_ms: Self::DEFAULT_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub snapshot_id: u64,
    pub shape: [usize; 2],
    pub data: String,
}

impl EncodeRequest {
    pub fn from_snapshot(snap: &Snapshot) -> Self {
        let mut bytes = Vec::with_capacity(CELLS * 4);
        for &v in snap.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        EncodeRequest {
            snapshot_id: snap.id,
            shape: [CHANNELS, TIME_BINS],
            data: BASE64.encode(bytes),
        }
    }

    /// Decodes the payload back into cell values.
    pub fn values(&self) -> Result<Vec<f32>> {
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| Error::DataIntegrity(format!("payload is not base64: {e}")))?;
        let expected = self.shape[0] * self.shape[1] * 4;
        if bytes.len() != expected {
            return Err(Error::Dimension {
                expected,
                received: bytes.len(),
            });
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub vector: Vec<f64>,
}

/// Connection to one encoder endpoint. Cheap to clone; calls are
/// independent and may run concurrently.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    client: JsonClient,
}

impl ExternalEmbedder {
    pub fn connect(handle: &EncoderHandle) -> Result<Self> {
        if handle.dimension != EMBEDDING_DIM {
            return Err(Error::Contract(format!(
                "encoder declares output dimension {}, the index requires {EMBEDDING_DIM}",
                handle.dimension
            )));
        }
        match &handle.endpoint {
            EncoderEndpoint::Url(url) => Ok(ExternalEmbedder {
                client: JsonClient::new(url, handle.timeout_ms, None),
            }),
            EncoderEndpoint::ModelPath(path) => Err(Error::Unsupported(format!(
                "no in-process inference runtime for {}; serve the exported encoder over the HTTP encoder protocol",
                path.display()
            ))),
        }
    }

    pub fn url(&self) -> &str {
        self.client.url()
    }

    pub fn embed(&self, snap: &Snapshot) -> Result<Embedding> {
        let text = self.client.post(&EncodeRequest::from_snapshot(snap))?;
        let value = parse_lenient(&text)?;
        let components = value
            .get("vector")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::MalformedResponse("expected an object with a `vector` array".into()))?;
        if components.len() != EMBEDDING_DIM {
            return Err(Error::Dimension {
                expected: EMBEDDING_DIM,
                received: components.len(),
            });
        }
        let raw = components
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                serde_json::Value::Number(n) => n
                    .as_f64()
                    .ok_or_else(|| Error::MalformedResponse(format!("component {i} is not a float"))),
                serde_json::Value::Null => Err(Error::DataIntegrity(format!("component {i} is NaN or infinite"))),
                serde_json::Value::String(s) if s.parse::<f64>().is_ok_and(|v| !v.is_finite()) => {
                    Err(Error::DataIntegrity(format!("component {i} is {s}")))
                }
                other => Err(Error::MalformedResponse(format!("component {i} is {other}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        Embedding::from_raw(snap.id, &raw, EmbeddingSource::External)
    }
}

pub fn embed_external(snap: &Snapshot, handle: &EncoderHandle) -> Result<Embedding> {
    ExternalEmbedder::connect(handle)?.embed(snap)
}
