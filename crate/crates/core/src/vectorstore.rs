//! Exact flat vector index with checksummed persistence.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! header   "GVIX" | version u16 | metric u8 | dimension u32 | count u64 | crc32 u32
//! records  count x (id u64 | dimension x f32 | meta_len u32 | meta JSON) | crc32 u32
//! ```
//!
//! Each CRC32 covers the bytes of its own section.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};

use crate::embedder::{Embedding, EMBEDDING_DIM};
use crate::error::io_at;
use crate::signalgen::JammerSpec;
use crate::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"GVIX";
pub const INDEX_FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8;
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    L2,
}

impl Metric {
    fn code(self) -> u8 {
        match self {
            Metric::Cosine => 0,
            Metric::L2 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Metric::Cosine),
            1 => Some(Metric::L2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::L2 => "l2",
        }
    }

    /// True when larger scores are better.
    pub fn higher_is_better(self) -> bool {
        self == Metric::Cosine
    }

    /// Maps a score to a cosine-equivalent similarity. Euclidean distance
    /// between unit vectors satisfies `d^2 = 2 - 2 cos`.
    pub fn similarity(self, score: f64) -> f64 {
        match self {
            Metric::Cosine => score,
            Metric::L2 => 1.0 - score * score / 2.0,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "l2" => Ok(Metric::L2),
            _ => Err(Error::param("metric", format!("unknown metric `{s}` (cosine, l2)"))),
        }
    }
}

/// One search result. `score` is the dot product under Cosine and the
/// Euclidean distance under L2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: u64,
    pub score: f64,
    pub meta: JammerSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dimension: usize,
    metric: Metric,
    ids: Vec<u64>,
    vectors: Vec<f32>,
    metas: Vec<JammerSpec>,
    positions: HashMap<u64, usize>,
}

impl VectorIndex {
    pub fn new(metric: Metric) -> Self {
        Self::with_dimension(EMBEDDING_DIM, metric)
    }

    pub fn with_dimension(dimension: usize, metric: Metric) -> Self {
        assert!(dimension > 0, "index dimension must be positive");
        VectorIndex {
            dimension,
            metric,
            ids: Vec::new(),
            vectors: Vec::new(),
            metas: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.positions.contains_key(&id)
    }

    pub fn vector(&self, id: u64) -> Option<&[f32]> {
        self.positions.get(&id).map(|&p| self.row(p))
    }

    pub fn meta(&self, id: u64) -> Option<&JammerSpec> {
        self.positions.get(&id).map(|&p| &self.metas[p])
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = (u64, &[f32], &JammerSpec)> + '_ {
        (0..self.len()).map(move |p| (self.ids[p], self.row(p), &self.metas[p]))
    }

    fn row(&self, position: usize) -> &[f32] {
        &self.vectors[position * self.dimension..(position + 1) * self.dimension]
    }

    /// Adds an embedding under its snapshot id.
    pub fn add(&mut self, embedding: &Embedding, meta: JammerSpec) -> Result<u64> {
        self.insert(embedding.snapshot_id, embedding.vector(), meta)
    }

    pub fn insert(&mut self, id: u64, vector: &[f32], meta: JammerSpec) -> Result<u64> {
        self.check_vector(vector)?;
        if self.metric == Metric::Cosine {
            let norm = vector.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::Contract(format!(
                    "cosine index stores unit vectors; record {id} has norm {norm}"
                )));
            }
        }
        if self.positions.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        meta.validate()?;
        self.positions.insert(id, self.ids.len());
        self.ids.push(id);
        self.vectors.extend_from_slice(vector);
        self.metas.push(meta);
        Ok(id)
    }

    fn check_vector(&self, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                received: vector.len(),
            });
        }
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!("non-finite vector component {i}")));
        }
        Ok(())
    }

    /// Exact top-k: scores every record and returns the best `min(k, len)`
    /// hits, best first, ties broken by ascending id.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.is_empty() {
            return Err(Error::State("search on an empty index".into()));
        }
        self.check_vector(query)?;
        let q: Vec<f64> = query.iter().map(|&v| f64::from(v)).collect();
        let mut scored: Vec<(f64, u64, usize)> = (0..self.len())
            .map(|p| {
                let row = self.row(p);
                let score = match self.metric {
                    Metric::Cosine => dot(&q, row),
                    Metric::L2 => squared_distance(&q, row).sqrt(),
                };
                (score, self.ids[p], p)
            })
            .collect();
        let higher = self.metric.higher_is_better();
        let order = |a: &(f64, u64, usize), b: &(f64, u64, usize)| {
            let by_score = if higher { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
            by_score.then(a.1.cmp(&b.1))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, id, p)| SearchHit {
                id,
                score,
                meta: self.metas[p],
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 + self.len() * (12 + 4 * self.dimension + 128));
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_FORMAT_VERSION.to_le_bytes());
        out.push(self.metric.code());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());

        let start = out.len();
        for (id, vector, meta) in self.records() {
            out.extend_from_slice(&id.to_le_bytes());
            for v in vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let json = serde_json::to_vec(meta).expect("JammerSpec serializes");
            out.extend_from_slice(&(json.len() as u32).to_le_bytes());
            out.extend_from_slice(&json);
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != INDEX_MAGIC {
            return Err(Error::format(0, "bad magic, not a GVIX index"));
        }
        let version = r.u16("version")?;
        if version != INDEX_FORMAT_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let code = r.u8("metric")?;
        let metric = Metric::from_code(code).ok_or_else(|| Error::format(6, format!("unknown metric code {code}")))?;
        let dimension = r.u32("dimension")? as usize;
        let count = r.u64("record count")?;
        let expected = crc32fast::hash(&bytes[..HEADER_LEN]);
        if r.u32("header checksum")? != expected {
            return Err(Error::format(HEADER_LEN as u64, "header checksum mismatch"));
        }
        if dimension == 0 {
            return Err(Error::format(7, "dimension is zero"));
        }

        // The records checksum is verified before any record is decoded so
        // a flipped byte is reported as corruption rather than as whatever
        // the damaged field happens to decode to.
        let start = r.pos;
        if bytes.len() < start + 4 {
            return Err(Error::format(bytes.len() as u64, "truncated before records checksum"));
        }
        let end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[end..].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[start..end]) != stored {
            return Err(Error::format(
                start as u64,
                format!("records checksum mismatch (section {start}..{end})"),
            ));
        }

        let mut index = VectorIndex::with_dimension(dimension, metric);
        let mut r = Reader {
            bytes: &bytes[..end],
            pos: start,
        };
        let mut vector = vec![0f32; dimension];
        for _ in 0..count {
            let at = r.pos as u64;
            let id = r.u64("record id")?;
            for v in vector.iter_mut() {
                *v = f32::from_le_bytes(r.take(4, "vector")?.try_into().expect("4 bytes"));
            }
            let len = r.u32("metadata length")? as usize;
            let meta_at = r.pos as u64;
            let meta: JammerSpec = serde_json::from_slice(r.take(len, "metadata")?)
                .map_err(|e| Error::format(meta_at, format!("metadata: {e}")))?;
            index
                .insert(id, &vector, meta)
                .map_err(|e| Error::format(at, format!("record {id}: {e}")))?;
        }
        if r.pos != end {
            return Err(Error::format(r.pos as u64, "trailing bytes after last record"));
        }
        Ok(index)
    }

    /// Writes atomically: a temporary sibling file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("gvix.tmp");
        let mut file = fs::File::create(&tmp).map_err(io_at(&tmp))?;
        file.write_all(&bytes).map_err(io_at(&tmp))?;
        file.sync_all().map_err(io_at(&tmp))?;
        drop(file);
        fs::rename(&tmp, path).map_err(io_at(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_at(path))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated: {what} needs {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

const LANES: usize = 8;

// Eight independent accumulators let the compiler vectorize the reduction.
fn dot(q: &[f64], row: &[f32]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let (qc, qr) = q.split_at(q.len() - q.len() % LANES);
    let (rc, rr) = row.split_at(qc.len());
    for (a, b) in qc.chunks_exact(LANES).zip(rc.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += a[l] * f64::from(b[l]);
        }
    }
    let tail: f64 = qr.iter().zip(rr).map(|(a, &b)| a * f64::from(b)).sum();
    acc.iter().sum::<f64>() + tail
}

fn squared_distance(q: &[f64], row: &[f32]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let (qc, qr) = q.split_at(q.len() - q.len() % LANES);
    let (rc, rr) = row.split_at(qc.len());
    for (a, b) in qc.chunks_exact(LANES).zip(rc.chunks_exact(LANES)) {
        for l in 0..LANES {
            let d = a[l] - f64::from(b[l]);
            acc[l] += d * d;
        }
    }
    let tail: f64 = qr
        .iter()
        .zip(rr)
        .map(|(a, &b)| {
            let d = a - f64::from(b);
            d * d
        })
        .sum();
    acc.iter().sum::<f64>() + tail
}

/// A [`VectorIndex`] shared between threads: many readers or one writer.
/// Searches never observe a half-applied add, and `save` writes a
/// point-in-time view.
#[derive(Debug, Clone)]
pub struct SharedIndex(Arc<RwLock<VectorIndex>>);

impl SharedIndex {
    pub fn new(index: VectorIndex) -> Self {
        SharedIndex(Arc::new(RwLock::new(index)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, VectorIndex> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, VectorIndex> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    pub fn add(&self, embedding: &Embedding, meta: JammerSpec) -> Result<u64> {
        self.write().add(embedding, meta)
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>> {
        self.read().search(query, k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.read().to_bytes();
        let tmp = path.with_extension("gvix.tmp");
        fs::write(&tmp, bytes).map_err(io_at(&tmp))?;
        fs::rename(&tmp, path).map_err(io_at(path))
    }
}
