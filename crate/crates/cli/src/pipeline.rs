//! The end-to-end query path: load, embed, retrieve, assemble, describe.

use std::path::PathBuf;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use gnssrag_core::describer::{Backend, Describer, Description, RemoteDescriber};
use gnssrag_core::embedder::{embed_baseline, Embedding, ExternalEmbedder};
use gnssrag_core::promptkit::{
    assemble_in_context, assemble_task_instruction, retrieve_context_vector, Context, DetailLevel, GenParams, ImageRef,
    Provenance, QueryText,
};
use gnssrag_core::signalgen::{read_snapshot, snapshot_from_bytes, Dataset, Snapshot};
use gnssrag_core::tasks::{Estimate, Prediction};
use gnssrag_core::vectorstore::{Metric, SearchHit, SharedIndex, VectorIndex};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{AppError, AtStage, Stage};

/// Id given to snapshots submitted inline, which carry none.
pub const INLINE_SNAPSHOT_ID: u64 = 0;

/// The embedding backend a pipeline runs with.
#[derive(Debug, Clone)]
pub enum Embedder {
    Baseline,
    External(ExternalEmbedder),
}

impl Embedder {
    pub fn from_config(config: &PipelineConfig) -> Result<Self, AppError> {
        match config.embedder.handle()? {
            None => Ok(Embedder::Baseline),
            Some(handle) => Ok(Embedder::External(ExternalEmbedder::connect(&handle).at(Stage::Embed)?)),
        }
    }

    pub fn embed(&self, snap: &Snapshot) -> gnssrag_core::Result<Embedding> {
        match self {
            Embedder::Baseline => embed_baseline(snap),
            Embedder::External(client) => client.embed(snap),
        }
    }
}

pub fn describer_from_config(config: &PipelineConfig) -> Describer {
    match config.describer.endpoint() {
        None => Describer::Templated,
        Some(endpoint) => Describer::Remote(RemoteDescriber::new(&endpoint)),
    }
}

/// Where the query snapshot comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotInput {
    Id(u64),
    Path(PathBuf),
    /// Base64 of a snapshot file.
    Inline(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifyInput {
    Snapshot(SnapshotInput),
    Vector(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub input: SnapshotInput,
    pub question: String,
    pub detail_level: DetailLevel,
    pub k: Option<usize>,
    pub params: Option<GenParams>,
    /// Without retrieval the prompt is the bare task instruction.
    pub retrieve: bool,
}

impl QueryRequest {
    pub fn new(input: SnapshotInput, question: impl Into<String>) -> Self {
        QueryRequest {
            input,
            question: question.into(),
            detail_level: DetailLevel::default(),
            k: None,
            params: None,
            retrieve: true,
        }
    }
}

/// Wall-clock milliseconds per stage. The stages run back to back, so they
/// sum to the total up to the bookkeeping between them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub load_ms: f64,
    pub embed_ms: f64,
    pub retrieve_ms: f64,
    pub assemble_ms: f64,
    pub describe_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.load_ms + self.embed_ms + self.retrieve_ms + self.assemble_ms + self.describe_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: u64,
    pub description: Description,
    /// `None` when retrieval was switched off.
    pub context: Option<Context>,
    pub timings: StageTimings,
}

/// The description without its latency, for reproducible output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptionView<'a> {
    pub text: &'a str,
    pub backend: Backend,
    pub token_count: usize,
    pub truncated: bool,
    pub estimate: Option<Estimate>,
}

impl<'a> From<&'a Description> for DescriptionView<'a> {
    fn from(d: &'a Description) -> Self {
        DescriptionView {
            text: &d.text,
            backend: d.backend,
            token_count: d.token_count,
            truncated: d.truncated,
            estimate: d.estimate,
        }
    }
}

/// CLI JSON for a query. Timings are left out unless asked for, so that a
/// deterministic run prints identical bytes every time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReport<'a> {
    pub query_id: u64,
    pub description: DescriptionView<'a>,
    pub context: &'a [SearchHit],
    pub provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl QueryOutcome {
    pub fn hits(&self) -> &[SearchHit] {
        self.context.as_ref().map_or(&[], |c| c.hits.as_slice())
    }

    pub fn report(&self, with_timings: bool) -> QueryReport<'_> {
        QueryReport {
            query_id: self.query_id,
            description: (&self.description).into(),
            context: self.hits(),
            provenance: self.context.as_ref().map(|c| c.provenance),
            timings: with_timings.then_some(self.timings),
        }
    }
}

enum Resolved {
    Snapshot(Snapshot, ImageRef),
    /// An indexed record whose snapshot file is not available.
    Stored(u64, Vec<f32>),
}

fn checked_k(k: usize) -> Result<usize, AppError> {
    if k == 0 {
        return Err(AppError::BadInput {
            field: "k",
            reason: "must be at least 1".into(),
        });
    }
    Ok(k)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// A loaded index plus the configured backends. Shareable across threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    index: SharedIndex,
    dataset: Option<Dataset>,
    embedder: Embedder,
    describer: Describer,
    k: usize,
    params: GenParams,
}

impl Pipeline {
    /// Loads the configured index and, if configured, opens the dataset.
    pub fn open(config: &PipelineConfig) -> Result<Self, AppError> {
        let index = VectorIndex::load(config.index_path()?).at(Stage::Load)?;
        let dataset = match &config.dataset {
            Some(root) => Some(Dataset::open(root).at(Stage::Load)?),
            None => None,
        };
        Self::with_index(config, index, dataset)
    }

    pub fn with_index(config: &PipelineConfig, index: VectorIndex, dataset: Option<Dataset>) -> Result<Self, AppError> {
        config.validate()?;
        Ok(Pipeline {
            index: SharedIndex::new(index),
            dataset,
            embedder: Embedder::from_config(config)?,
            describer: describer_from_config(config),
            k: config.k,
            params: config.params,
        })
    }

    pub fn index(&self) -> &SharedIndex {
        &self.index
    }

    pub fn default_k(&self) -> usize {
        self.k
    }

    fn resolve(&self, input: &SnapshotInput) -> Result<Resolved, AppError> {
        match input {
            SnapshotInput::Id(id) => {
                if let Some(dataset) = self.dataset.as_ref().filter(|d| d.contains(*id)) {
                    let snap = dataset.load(*id).at(Stage::Load)?;
                    return Ok(Resolved::Snapshot(snap, ImageRef::SnapshotId(*id)));
                }
                match self.index.read().vector(*id) {
                    Some(v) => Ok(Resolved::Stored(*id, v.to_vec())),
                    None => Err(AppError::NotFound(*id)),
                }
            }
            SnapshotInput::Path(path) => {
                let snap = read_snapshot(path).at(Stage::Load)?;
                let image_ref = ImageRef::SnapshotId(snap.id);
                Ok(Resolved::Snapshot(snap, image_ref))
            }
            SnapshotInput::Inline(data) => {
                let bytes = BASE64.decode(data.trim()).map_err(|e| AppError::BadInput {
                    field: "snapshot_b64",
                    reason: e.to_string(),
                })?;
                let snap = snapshot_from_bytes(INLINE_SNAPSHOT_ID, &bytes).map_err(|e| AppError::BadInput {
                    field: "snapshot_b64",
                    reason: e.to_string(),
                })?;
                Ok(Resolved::Snapshot(snap, ImageRef::Inline(data.trim().to_string())))
            }
        }
    }

    /// Load and embed: the query id, vector and image reference.
    fn query_vector(&self, input: &SnapshotInput, timings: &mut StageTimings) -> Result<(u64, Vec<f32>, ImageRef), AppError> {
        let started = Instant::now();
        let resolved = self.resolve(input)?;
        timings.load_ms = ms(started);
        let started = Instant::now();
        let out = match resolved {
            Resolved::Snapshot(snap, image_ref) => {
                let embedding = self.embedder.embed(&snap).at(Stage::Embed)?;
                (snap.id, embedding.vector().to_vec(), image_ref)
            }
            Resolved::Stored(id, vector) => (id, vector, ImageRef::SnapshotId(id)),
        };
        timings.embed_ms = ms(started);
        Ok(out)
    }

    pub fn query(&self, request: &QueryRequest) -> Result<QueryOutcome, AppError> {
        let total = Instant::now();
        let mut timings = StageTimings::default();
        // Input checks come first so a bad request costs nothing.
        let text = QueryText::new(request.question.clone(), request.detail_level).at(Stage::Assemble)?;
        let params = request.params.unwrap_or(self.params);
        params.validate().at(Stage::Assemble)?;
        let k = checked_k(request.k.unwrap_or(self.k))?;

        let (query_id, vector, image_ref) = self.query_vector(&request.input, &mut timings)?;

        let started = Instant::now();
        let context = if request.retrieve {
            let index = self.index.read();
            Some(retrieve_context_vector(&index, query_id, &vector, k).at(Stage::Retrieve)?)
        } else {
            None
        };
        timings.retrieve_ms = ms(started);

        let started = Instant::now();
        let prompt = match &context {
            Some(ctx) => assemble_in_context(ctx, image_ref, &text),
            None => assemble_task_instruction(image_ref, &text),
        }
        .and_then(|p| p.with_params(params))
        .at(Stage::Assemble)?;
        timings.assemble_ms = ms(started);

        let started = Instant::now();
        let description = self.describer.describe(&prompt).at(Stage::Describe)?;
        timings.describe_ms = ms(started);
        timings.total_ms = ms(total);

        Ok(QueryOutcome {
            query_id,
            description,
            context,
            timings,
        })
    }

    pub fn classify(&self, input: &ClassifyInput, k: Option<usize>) -> Result<Prediction, AppError> {
        let k = checked_k(k.unwrap_or(self.k))?;
        let vector = match input {
            ClassifyInput::Snapshot(input) => self.query_vector(input, &mut StageTimings::default())?.1,
            ClassifyInput::Vector(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(AppError::BadInput {
                        field: "vector",
                        reason: format!("component {i} is not finite"),
                    });
                }
                v.clone()
            }
        };
        let index = self.index.read();
        let hits = index.search(&vector, k).at(Stage::Classify)?;
        Prediction::from_hits(&hits, index.metric()).at(Stage::Classify)
    }

    pub fn metric(&self) -> Metric {
        self.index.read().metric()
    }
}
